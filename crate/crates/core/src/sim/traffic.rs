use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Micros, DEFAULT_MAX_PAYLOAD, MICROS_PER_SEC};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficProfile {
    pub fps: f64,
    /// Relative standard deviation of the frame size; sizes are drawn
    /// uniformly around the mean.
    pub frame_size_spread: f64,
    pub max_payload: u32,
    pub audio: bool,
    pub audio_bytes: u32,
    pub audio_period_ms: f64,
    pub tracking: bool,
    pub tracking_bytes: u32,
    pub tracking_per_frame: u32,
    pub statistics: bool,
    pub statistics_bytes: u32,
    pub feedback_bytes: u32,
    pub haptics: bool,
    pub haptics_bytes: u32,
    /// Poisson rate of haptic events per second.
    pub haptics_rate: f64,
}

impl Default for TrafficProfile {
    fn default() -> Self {
        TrafficProfile {
            fps: 90.0,
            frame_size_spread: 0.1,
            max_payload: DEFAULT_MAX_PAYLOAD,
            audio: true,
            audio_bytes: 1920,
            audio_period_ms: 10.0,
            tracking: true,
            tracking_bytes: 207,
            tracking_per_frame: 3,
            statistics: true,
            statistics_bytes: 144,
            feedback_bytes: 56,
            haptics: true,
            haptics_bytes: 88,
            haptics_rate: 2.0,
        }
    }
}

impl TrafficProfile {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let bad = |name: &str, why: &str| Err(Error::config(format!("{prefix}.{name}"), why));
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad("fps", "must be positive");
        }
        if !(self.frame_size_spread.is_finite() && self.frame_size_spread >= 0.0) {
            return bad("frame_size_spread", "must be non-negative");
        }
        if self.frame_size_spread * 3f64.sqrt() >= 1.0 {
            return bad("frame_size_spread", "must stay below 1/sqrt(3) so sizes remain positive");
        }
        if self.max_payload == 0 {
            return bad("max_payload", "must be positive");
        }
        if self.audio && !(self.audio_period_ms > 0.0 && self.audio_bytes > 0) {
            return bad("audio_period_ms", "audio needs a positive period and size");
        }
        if self.tracking && self.tracking_per_frame == 0 {
            return bad("tracking_per_frame", "must be positive when tracking is on");
        }
        if self.haptics && (self.haptics_rate.is_nan() || self.haptics_rate <= 0.0) {
            return bad("haptics_rate", "must be positive when haptics are on");
        }
        if self.feedback_bytes == 0 {
            return bad("feedback_bytes", "must be positive");
        }
        Ok(())
    }

    /// Transmission instant of frame `k`: exactly `fps` frames per second.
    pub fn frame_time(&self, k: u64) -> Micros {
        (k as f64 * MICROS_PER_SEC as f64 / self.fps).round() as Micros
    }

    pub fn frames_in(&self, duration: Micros) -> u64 {
        let mut n = (duration as f64 * self.fps / MICROS_PER_SEC as f64).floor() as u64;
        while n > 0 && self.frame_time(n - 1) >= duration {
            n -= 1;
        }
        while self.frame_time(n) < duration {
            n += 1;
        }
        n
    }

    pub fn vsync_us(&self) -> Micros {
        (MICROS_PER_SEC as f64 / self.fps).round() as Micros
    }

    /// Mean frame size in bytes for a target bitrate.
    pub fn mean_frame_bytes(&self, bitrate_mbps: f64) -> f64 {
        bitrate_mbps * 1e6 / (8.0 * self.fps)
    }

    pub fn draw_frame_bytes(&self, bitrate_mbps: f64, rng: &mut ChaCha8Rng) -> u64 {
        let mean = self.mean_frame_bytes(bitrate_mbps);
        let half = self.frame_size_spread * 3f64.sqrt();
        let factor = if half > 0.0 { 1.0 + rng.gen_range(-half..half) } else { 1.0 };
        (mean * factor).round().max(1.0) as u64
    }

    pub fn tracking_time(&self, k: u64) -> Micros {
        let rate = self.fps * self.tracking_per_frame as f64;
        (k as f64 * MICROS_PER_SEC as f64 / rate).round() as Micros
    }

    pub fn audio_time(&self, k: u64) -> Micros {
        (k as f64 * self.audio_period_ms * 1_000.0).round() as Micros
    }

    pub fn haptics_gap(&self, rng: &mut ChaCha8Rng) -> Micros {
        let u: f64 = rng.gen();
        (-(1.0 - u).ln() / self.haptics_rate * MICROS_PER_SEC as f64).round().max(1.0) as Micros
    }
}

/// Encoder and decoder latency, each a constant plus uniform noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencyModel {
    pub encoder_ms: f64,
    pub encoder_noise_ms: f64,
    pub decoder_ms: f64,
    pub decoder_noise_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            encoder_ms: 5.0,
            encoder_noise_ms: 2.0,
            decoder_ms: 10.0,
            decoder_noise_ms: 3.0,
        }
    }
}

impl LatencyModel {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        for (name, v) in [
            ("encoder_ms", self.encoder_ms),
            ("encoder_noise_ms", self.encoder_noise_ms),
            ("decoder_ms", self.decoder_ms),
            ("decoder_noise_ms", self.decoder_noise_ms),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{prefix}.{name}"), "must be non-negative"));
            }
        }
        Ok(())
    }

    fn draw(base: f64, noise: f64, rng: &mut ChaCha8Rng) -> f64 {
        let n = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
        (base + n).max(0.0)
    }

    pub fn encoder(&self, rng: &mut ChaCha8Rng) -> f64 {
        Self::draw(self.encoder_ms, self.encoder_noise_ms, rng)
    }

    pub fn decoder(&self, rng: &mut ChaCha8Rng) -> f64 {
        Self::draw(self.decoder_ms, self.decoder_noise_ms, rng)
    }
}
