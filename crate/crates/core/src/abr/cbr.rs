use serde::{Deserialize, Serialize};

use super::{check_positive, BitrateController, Step};
use crate::error::Result;
use crate::metrics::MetricsSnapshot;
use crate::model::{secs_to_micros, Micros};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CbrParams {
    pub bitrate_mbps: f64,
    pub period_s: f64,
}

impl Default for CbrParams {
    fn default() -> Self {
        CbrParams {
            bitrate_mbps: 100.0,
            period_s: 1.0,
        }
    }
}

impl CbrParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        check_positive(&format!("{prefix}.bitrate_mbps"), self.bitrate_mbps)?;
        check_positive(&format!("{prefix}.period_s"), self.period_s)
    }
}

/// Constant bitrate: ignores the network entirely.
#[derive(Debug, Clone)]
pub struct Cbr {
    params: CbrParams,
}

impl Cbr {
    pub fn new(params: CbrParams) -> Self {
        Cbr { params }
    }
}

impl BitrateController for Cbr {
    fn name(&self) -> &'static str {
        "cbr"
    }

    fn period_us(&self) -> Micros {
        secs_to_micros(self.params.period_s)
    }

    fn bitrate(&self) -> f64 {
        self.params.bitrate_mbps
    }

    fn range(&self) -> (f64, f64) {
        (self.params.bitrate_mbps, self.params.bitrate_mbps)
    }

    fn step(&mut self, _snapshot: &MetricsSnapshot) -> Step {
        Step::hold(self.params.bitrate_mbps)
    }
}
