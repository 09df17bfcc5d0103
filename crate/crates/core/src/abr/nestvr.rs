//! Network-aware step-wise controller.
//!
//! Every period the controller looks at the windowed network frame ratio and
//! VF round-trip time and moves the target by at most one step:
//!
//! 1. NFR below its threshold: step down.
//! 2. Otherwise, RTT below its threshold: step up with the exploration
//!    probability, else hold.
//! 3. Otherwise (frames arrive but late): step down with the complementary
//!    probability, else hold.
//!
//! The result is bounded by a fraction of the estimated capacity (the
//! windowed mean peak throughput) and then by the configured range.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_positive, check_range, BitrateController, Step};
use crate::error::{Error, Result};
use crate::metrics::MetricsSnapshot;
use crate::model::{secs_to_micros, DecisionTag, Micros};

/// How the RTT threshold is derived from the mean transmit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// `sigma_ms = scale * mean_tx_interval_ms`.
    #[default]
    Product,
    /// `sigma_ms = scale / mean_tx_interval_s`, taken numerically as ms.
    Quotient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NestVrParams {
    pub tau_s: f64,
    pub beta_mbps: f64,
    /// Capacity scaling factor m in (0, 1].
    pub capacity_scale: f64,
    pub min_mbps: f64,
    pub max_mbps: f64,
    pub initial_mbps: f64,
    /// Exploration probability gamma.
    pub explore_prob: f64,
    /// NFR threshold rho.
    pub nfr_threshold: f64,
    /// VF-RTT threshold scaling factor.
    pub rtt_scale: f64,
    pub sigma_mode: SigmaMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
}

impl Default for NestVrParams {
    fn default() -> Self {
        NestVrParams {
            tau_s: 1.0,
            beta_mbps: 10.0,
            capacity_scale: 0.9,
            min_mbps: 10.0,
            max_mbps: 100.0,
            initial_mbps: 30.0,
            explore_prob: 0.25,
            nfr_threshold: 0.95,
            rtt_scale: 2.0,
            sigma_mode: SigmaMode::Product,
            rng_seed: None,
        }
    }
}

impl NestVrParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        check_positive(&format!("{prefix}.tau_s"), self.tau_s)?;
        check_positive(&format!("{prefix}.beta_mbps"), self.beta_mbps)?;
        check_positive(&format!("{prefix}.rtt_scale"), self.rtt_scale)?;
        check_range(prefix, self.min_mbps, self.initial_mbps, self.max_mbps)?;
        if !(self.capacity_scale > 0.0 && self.capacity_scale <= 1.0) {
            return Err(Error::config(format!("{prefix}.capacity_scale"), "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.explore_prob) {
            return Err(Error::config(format!("{prefix}.explore_prob"), "must lie in [0, 1]"));
        }
        if !(self.nfr_threshold > 0.0 && self.nfr_threshold <= 1.0) {
            return Err(Error::config(format!("{prefix}.nfr_threshold"), "must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn sigma_ms(&self, mean_tx_interval_ms: f64) -> f64 {
        match self.sigma_mode {
            SigmaMode::Product => self.rtt_scale * mean_tx_interval_ms,
            SigmaMode::Quotient => self.rtt_scale / (mean_tx_interval_ms / 1_000.0),
        }
    }
}

/// Windowed inputs of one decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NestVrInputs {
    pub nfr: f64,
    pub vf_rtt_ms: f64,
    pub tx_interval_ms: f64,
    pub capacity_mbps: f64,
}

impl NestVrInputs {
    /// Extracts the inputs once every window holds at least two samples.
    pub fn from_snapshot(s: &MetricsSnapshot) -> Option<Self> {
        let warm = [s.rx_samples, s.tx_samples, s.rtt_samples, s.peak_samples]
            .iter()
            .all(|&n| n >= 2);
        if !warm {
            return None;
        }
        Some(NestVrInputs {
            nfr: s.nfr?,
            vf_rtt_ms: s.vf_rtt_mean?,
            tx_interval_ms: s.frame_tx_interval_mean?,
            capacity_mbps: s.peak_throughput_mean?,
        })
    }
}

/// One decision from `current`. `draw` yields uniform samples in [0, 1) and
/// is called at most once.
pub fn nestvr_decide(p: &NestVrParams, current: f64, inputs: &NestVrInputs, mut draw: impl FnMut() -> f64) -> Step {
    let sigma = p.sigma_ms(inputs.tx_interval_ms);
    let (mut proposed, mut decision) = if inputs.nfr < p.nfr_threshold {
        (current - p.beta_mbps, DecisionTag::Decrease)
    } else if inputs.vf_rtt_ms < sigma {
        if draw() < p.explore_prob {
            (current + p.beta_mbps, DecisionTag::IncreaseExplore)
        } else {
            (current, DecisionTag::Hold)
        }
    } else if draw() < 1.0 - p.explore_prob {
        (current - p.beta_mbps, DecisionTag::Decrease)
    } else {
        (current, DecisionTag::Hold)
    };
    let rule_output = proposed;

    let bound = p.capacity_scale * inputs.capacity_mbps;
    if proposed > bound {
        proposed = bound;
        decision = DecisionTag::CapClamp;
    }
    let clamped = proposed.clamp(p.min_mbps, p.max_mbps);
    if clamped != proposed {
        decision = DecisionTag::RangeClamp;
    }

    Step {
        previous_mbps: current,
        proposed_mbps: rule_output,
        capacity_bound_mbps: Some(bound),
        bitrate_mbps: clamped,
        decision,
    }
}

pub struct NestVr {
    params: NestVrParams,
    bitrate: f64,
    rng: ChaCha8Rng,
}

impl NestVr {
    pub fn new(params: NestVrParams, rng: ChaCha8Rng) -> Self {
        NestVr {
            bitrate: params.initial_mbps,
            params,
            rng,
        }
    }
}

impl BitrateController for NestVr {
    fn name(&self) -> &'static str {
        "nestvr"
    }

    fn period_us(&self) -> Micros {
        secs_to_micros(self.params.tau_s)
    }

    fn bitrate(&self) -> f64 {
        self.bitrate
    }

    fn range(&self) -> (f64, f64) {
        (self.params.min_mbps, self.params.max_mbps)
    }

    fn step(&mut self, snapshot: &MetricsSnapshot) -> Step {
        let Some(inputs) = NestVrInputs::from_snapshot(snapshot) else {
            return Step::hold(self.bitrate);
        };
        let rng = &mut self.rng;
        let step = nestvr_decide(&self.params, self.bitrate, &inputs, || rng.gen::<f64>());
        self.bitrate = step.bitrate_mbps;
        step
    }
}
