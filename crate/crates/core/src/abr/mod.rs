//! Bitrate controllers behind a common periodic-step interface.

mod alvr;
mod cbr;
mod nestvr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use alvr::{alvr_capacity_estimate, alvr_target, AlvrAbr, AlvrAbrParams, AlvrTarget};
pub use cbr::{Cbr, CbrParams};
pub use nestvr::{nestvr_decide, NestVr, NestVrInputs, NestVrParams, SigmaMode};

use crate::error::{Error, Result};
use crate::metrics::MetricsSnapshot;
use crate::model::{DecisionTag, Micros};

/// Per-frame statistics that reach the server with the native statistics
/// packet, after the frame has been decoded and displayed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameStats {
    pub payload_bits: f64,
    /// UL tracking delay plus DL frame delivery time.
    pub network_delay_ms: Option<f64>,
    pub encoder_latency_ms: Option<f64>,
    pub decoder_latency_ms: Option<f64>,
}

/// Outcome of one controller step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub previous_mbps: f64,
    /// Target after the policy rules, before any bound or range clamp.
    pub proposed_mbps: f64,
    /// Capacity-derived upper bound in force, if the policy has one.
    pub capacity_bound_mbps: Option<f64>,
    pub bitrate_mbps: f64,
    pub decision: DecisionTag,
}

impl Step {
    pub fn hold(current: f64) -> Self {
        Step {
            previous_mbps: current,
            proposed_mbps: current,
            capacity_bound_mbps: None,
            bitrate_mbps: current,
            decision: DecisionTag::Hold,
        }
    }
}

pub trait BitrateController: Send {
    fn name(&self) -> &'static str;

    /// Adjustment period.
    fn period_us(&self) -> Micros;

    /// Current target bitrate in Mbps.
    fn bitrate(&self) -> f64;

    fn range(&self) -> (f64, f64);

    /// Native statistics for one displayed frame.
    fn observe_frame(&mut self, _stats: &FrameStats) {}

    fn step(&mut self, snapshot: &MetricsSnapshot) -> Step;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    Cbr,
    Alvr,
    Nestvr,
}

impl std::str::FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "cbr" => Ok(ControllerKind::Cbr),
            "alvr" => Ok(ControllerKind::Alvr),
            "nestvr" => Ok(ControllerKind::Nestvr),
            other => Err(format!("unknown controller `{other}` (expected cbr, alvr or nestvr)")),
        }
    }
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Cbr => "cbr",
            ControllerKind::Alvr => "alvr",
            ControllerKind::Nestvr => "nestvr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    pub cbr: CbrParams,
    pub alvr: AlvrAbrParams,
    pub nestvr: NestVrParams,
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        self.cbr.validate("controller.cbr")?;
        self.alvr.validate("controller.alvr")?;
        self.nestvr.validate("controller.nestvr")
    }

    /// Instantiates the selected controller. `seed` feeds the controller's
    /// private random stream unless its parameters pin one.
    pub fn build(&self, fps: f64, seed: u64) -> Box<dyn BitrateController> {
        match self.kind {
            ControllerKind::Cbr => Box::new(Cbr::new(self.cbr.clone())),
            ControllerKind::Alvr => Box::new(AlvrAbr::new(self.alvr.clone(), fps)),
            ControllerKind::Nestvr => {
                let seed = self.nestvr.rng_seed.unwrap_or(seed);
                Box::new(NestVr::new(self.nestvr.clone(), ChaCha8Rng::seed_from_u64(seed)))
            }
        }
    }
}

pub(crate) fn check_positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be a positive number, got {v}")))
    }
}

pub(crate) fn check_range(prefix: &str, min: f64, initial: f64, max: f64) -> Result<()> {
    check_positive(&format!("{prefix}.min_mbps"), min)?;
    check_positive(&format!("{prefix}.max_mbps"), max)?;
    if min > max {
        return Err(Error::config(format!("{prefix}.min_mbps"), "must not exceed max_mbps"));
    }
    if !(min..=max).contains(&initial) {
        return Err(Error::config(
            format!("{prefix}.initial_mbps"),
            format!("must lie within [{min}, {max}], got {initial}"),
        ));
    }
    Ok(())
}
