//! Scenario configuration: a TOML document with every section optional.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::abr::ControllerConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricsConfig;
use crate::model::{secs_to_micros, Micros};
use crate::path::{PathConfig, WifiLinkModel};
use crate::sim::{LatencyModel, TrafficProfile};
use crate::trace::CapturePoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaptureConfig {
    pub points: Vec<CapturePoint>,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        CaptureConfig {
            points: vec![CapturePoint::ServerEgress, CapturePoint::PathEgress],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Parent directory for run directories.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    /// `[start_s, end_s)` reporting intervals. When empty they are derived
    /// from the effect boundaries.
    pub intervals: Vec<(f64, f64)>,
    /// Frames per sliding window for delivery-rate series.
    pub rate_window: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            intervals: Vec::new(),
            rate_window: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration_s: f64,
    pub seed: u64,
    pub traffic: TrafficProfile,
    pub latency: LatencyModel,
    pub controller: ControllerConfig,
    pub metrics: MetricsConfig,
    pub path: PathConfig,
    pub wifi: WifiLinkModel,
    pub capture: CaptureConfig,
    pub output: OutputConfig,
    pub report: ReportConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "scenario".into(),
            duration_s: 70.0,
            seed: 1,
            traffic: TrafficProfile::default(),
            latency: LatencyModel::default(),
            controller: ControllerConfig::default(),
            metrics: MetricsConfig::default(),
            path: PathConfig::default(),
            wifi: WifiLinkModel::default(),
            capture: CaptureConfig::default(),
            output: OutputConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

fn parse_error(e: impl std::fmt::Display) -> Error {
    Error::ConfigParse(e.to_string().trim_end().to_string())
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut cur = table;
    while let Some(part) = parts.next() {
        if part.is_empty() {
            return Err(Error::config(key, "empty path segment"));
        }
        if parts.peek().is_none() {
            cur.insert(part.to_string(), value);
            return Ok(());
        }
        let next = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = next
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{part}` is not a section")))?;
    }
    Ok(())
}

impl ScenarioConfig {
    /// Parses and validates.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::with_overrides(text, &[])
    }

    /// Parses `text`, applies `key.path=value` overrides, then validates.
    pub fn with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(parse_error)?;
        for (k, v) in overrides {
            set_dotted(&mut table, k, override_value(v))?;
        }
        let cfg: ScenarioConfig = table.try_into().map_err(parse_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Returns a copy with overrides applied and re-validated.
    pub fn overridden(&self, overrides: &[(String, String)]) -> Result<Self> {
        Self::with_overrides(&self.to_toml_string(), overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes to TOML")
    }

    /// Stable identity of a resolved configuration.
    pub fn run_id(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn duration_us(&self) -> Micros {
        secs_to_micros(self.duration_s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::config("duration_s", "must be positive"));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config("name", "must be a non-empty file-name-safe string"));
        }
        if self.seed > i64::MAX as u64 {
            // TOML integers are signed 64-bit
            return Err(Error::config("seed", "must be at most 2^63 - 1"));
        }
        self.traffic.validate("traffic")?;
        self.latency.validate("latency")?;
        self.controller.validate()?;
        if self.metrics.window < 2 {
            return Err(Error::config("metrics.window", "must be at least 2"));
        }
        self.path.validate("path")?;
        self.wifi.validate("wifi")?;
        for (i, &(a, b)) in self.report.intervals.iter().enumerate() {
            if !(a >= 0.0 && b > a) {
                return Err(Error::config(format!("report.intervals[{i}]"), "needs 0 <= start < end"));
            }
        }
        if self.report.rate_window == 0 {
            return Err(Error::config("report.rate_window", "must be positive"));
        }
        Ok(())
    }

    /// Reporting intervals in seconds: explicit ones, or the pieces between
    /// consecutive effect boundaries.
    pub fn report_intervals(&self) -> Vec<(f64, f64)> {
        if !self.report.intervals.is_empty() {
            return self.report.intervals.clone();
        }
        let mut cuts = vec![0.0, self.duration_s];
        for e in &self.path.effects {
            cuts.push(e.start_s.min(self.duration_s));
            cuts.push(e.end_s.min(self.duration_s));
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }
}
