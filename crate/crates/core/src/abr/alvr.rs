//! Reconstruction of ALVR's native adaptive bitrate.
//!
//! Once per period the moving average of the per-frame capacity estimate
//! `L / d_ntw`, scaled by a multiplier, becomes the initial target. Each
//! latency (encoder, decoder, network) that exceeds its threshold imposes a
//! cap that scales the initial target by `threshold / measured`; the lowest
//! cap wins and the result is clamped to the configured range.

use serde::{Deserialize, Serialize};

use super::{check_positive, check_range, BitrateController, FrameStats, Step};
use crate::error::Result;
use crate::metrics::{MetricsSnapshot, SlidingWindow};
use crate::model::{secs_to_micros, DecisionTag, Micros};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlvrAbrParams {
    pub multiplier: f64,
    pub period_s: f64,
    /// Defaults to 0.9 frame intervals at the target frame rate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encoder_threshold_ms: Option<f64>,
    pub decoder_threshold_ms: f64,
    pub network_threshold_ms: f64,
    pub min_mbps: f64,
    pub max_mbps: f64,
    pub initial_mbps: f64,
    /// Samples in the capacity moving average.
    pub capacity_window: usize,
    /// Samples in each latency moving average.
    pub latency_window: usize,
}

impl Default for AlvrAbrParams {
    fn default() -> Self {
        AlvrAbrParams {
            multiplier: 0.9,
            period_s: 1.0,
            encoder_threshold_ms: None,
            decoder_threshold_ms: 30.0,
            network_threshold_ms: 8.0,
            min_mbps: 10.0,
            max_mbps: 100.0,
            initial_mbps: 30.0,
            capacity_window: 256,
            latency_window: 256,
        }
    }
}

impl AlvrAbrParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        check_positive(&format!("{prefix}.multiplier"), self.multiplier)?;
        check_positive(&format!("{prefix}.period_s"), self.period_s)?;
        if let Some(t) = self.encoder_threshold_ms {
            check_positive(&format!("{prefix}.encoder_threshold_ms"), t)?;
        }
        check_positive(&format!("{prefix}.decoder_threshold_ms"), self.decoder_threshold_ms)?;
        check_positive(&format!("{prefix}.network_threshold_ms"), self.network_threshold_ms)?;
        check_positive(&format!("{prefix}.capacity_window"), self.capacity_window as f64)?;
        check_positive(&format!("{prefix}.latency_window"), self.latency_window as f64)?;
        check_range(prefix, self.min_mbps, self.initial_mbps, self.max_mbps)
    }

    pub fn encoder_threshold(&self, fps: f64) -> f64 {
        self.encoder_threshold_ms.unwrap_or(0.9 * 1_000.0 / fps)
    }
}

/// Per-frame capacity estimate in Mbps from the frame payload in bits and its
/// network delay in seconds. Zero delay yields no sample.
pub fn alvr_capacity_estimate(payload_bits: f64, network_delay_s: f64) -> Option<f64> {
    (network_delay_s > 0.0).then(|| payload_bits / network_delay_s / 1e6)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlvrTarget {
    pub initial: f64,
    /// min(initial, caps) before the range clamp.
    pub limited: f64,
    pub bitrate: f64,
    pub cap_binding: bool,
}

/// Applies the latency caps. `latencies` pairs each measured latency (absent
/// measurements are skipped) with its threshold.
pub fn alvr_target(capacity_mean: f64, multiplier: f64, latencies: &[(Option<f64>, f64)], min: f64, max: f64) -> AlvrTarget {
    let initial = multiplier * capacity_mean;
    let limited = latencies
        .iter()
        .filter_map(|&(measured, threshold)| measured.filter(|&m| m > threshold).map(|m| initial * threshold / m))
        .fold(initial, f64::min);
    AlvrTarget {
        initial,
        limited,
        bitrate: limited.clamp(min, max),
        cap_binding: limited < initial,
    }
}

pub struct AlvrAbr {
    params: AlvrAbrParams,
    encoder_threshold_ms: f64,
    bitrate: f64,
    capacity: SlidingWindow<f64>,
    encoder: SlidingWindow<f64>,
    decoder: SlidingWindow<f64>,
    network: SlidingWindow<f64>,
}

impl AlvrAbr {
    pub fn new(params: AlvrAbrParams, fps: f64) -> Self {
        let lw = params.latency_window;
        AlvrAbr {
            encoder_threshold_ms: params.encoder_threshold(fps),
            bitrate: params.initial_mbps,
            capacity: SlidingWindow::new(params.capacity_window),
            encoder: SlidingWindow::new(lw),
            decoder: SlidingWindow::new(lw),
            network: SlidingWindow::new(lw),
            params,
        }
    }

    pub fn capacity_mean(&self) -> Option<f64> {
        self.capacity.mean()
    }
}

impl BitrateController for AlvrAbr {
    fn name(&self) -> &'static str {
        "alvr"
    }

    fn period_us(&self) -> Micros {
        secs_to_micros(self.params.period_s)
    }

    fn bitrate(&self) -> f64 {
        self.bitrate
    }

    fn range(&self) -> (f64, f64) {
        (self.params.min_mbps, self.params.max_mbps)
    }

    fn observe_frame(&mut self, stats: &FrameStats) {
        if let Some(d) = stats.network_delay_ms {
            if let Some(c) = alvr_capacity_estimate(stats.payload_bits, d / 1_000.0) {
                self.capacity.push(c);
            }
            self.network.push(d);
        }
        if let Some(e) = stats.encoder_latency_ms {
            self.encoder.push(e);
        }
        if let Some(d) = stats.decoder_latency_ms {
            self.decoder.push(d);
        }
    }

    fn step(&mut self, _snapshot: &MetricsSnapshot) -> Step {
        if self.capacity.len() < 2 {
            return Step::hold(self.bitrate);
        }
        let capacity = self.capacity.mean().expect("window is warm");
        let t = alvr_target(
            capacity,
            self.params.multiplier,
            &[
                (self.encoder.mean(), self.encoder_threshold_ms),
                (self.decoder.mean(), self.params.decoder_threshold_ms),
                (self.network.mean(), self.params.network_threshold_ms),
            ],
            self.params.min_mbps,
            self.params.max_mbps,
        );
        let previous = self.bitrate;
        let decision = if t.bitrate != t.limited {
            DecisionTag::RangeClamp
        } else if t.cap_binding {
            DecisionTag::CapClamp
        } else if t.bitrate < previous {
            DecisionTag::Decrease
        } else if t.bitrate > previous {
            DecisionTag::IncreaseExplore
        } else {
            DecisionTag::Hold
        };
        self.bitrate = t.bitrate;
        Step {
            previous_mbps: previous,
            proposed_mbps: t.initial,
            capacity_bound_mbps: None,
            bitrate_mbps: t.bitrate,
            decision,
        }
    }
}
