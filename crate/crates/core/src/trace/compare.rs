//! Side-by-side comparison of the online session log with metrics derived
//! from a packet trace.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::offline::{TraceFrameMetrics, TraceMetrics};
use crate::error::{Error, Result};
use crate::model::SessionLogEntry;

/// How a metric's differences are judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffKind {
    /// Pass when the largest absolute difference is within tolerance.
    Exact,
    /// Pass when the mean absolute difference is within tolerance.
    Timed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub frame_span: f64,
    pub packets_lost_interval: f64,
    pub frame_interarrival: f64,
    pub vf_rtt: f64,
    pub instant_throughput: f64,
    pub peak_throughput: f64,
    pub vf_jitter: f64,
    pub packet_jitter_rfc3550: f64,
    pub fowd: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            frame_span: 0.0,
            packets_lost_interval: 0.0,
            frame_interarrival: 0.001,
            vf_rtt: 0.001,
            instant_throughput: 0.01,
            peak_throughput: 0.01,
            vf_jitter: 0.001,
            packet_jitter_rfc3550: 0.001,
            fowd: 0.001,
        }
    }
}

/// Nearest-rank quantiles at 5, 25, 50, 75 and 95 percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

/// Nearest-rank order statistic: the smallest sample with at least `p`% of
/// the samples at or below it.
pub fn nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

impl Quantiles {
    pub fn of(samples: &[f64]) -> Option<Quantiles> {
        let mut s: Vec<f64> = samples.iter().copied().filter(|x| !x.is_nan()).collect();
        s.sort_by(f64::total_cmp);
        Some(Quantiles {
            p5: nearest_rank(&s, 5.0)?,
            p25: nearest_rank(&s, 25.0)?,
            p50: nearest_rank(&s, 50.0)?,
            p75: nearest_rank(&s, 75.0)?,
            p95: nearest_rank(&s, 95.0)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: String,
    pub kind: DiffKind,
    /// False when one side cannot produce the metric at all.
    pub available: bool,
    pub count: usize,
    pub max_abs_diff: Option<f64>,
    pub mean_abs_diff: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub log_quantiles: Option<Quantiles>,
    pub trace_quantiles: Option<Quantiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub run_id: Option<String>,
    pub capture: Option<String>,
    pub caveat: Option<String>,
    pub frames_matched: usize,
    pub only_in_log: Vec<u64>,
    pub only_in_trace: Vec<u64>,
    pub late_filtered: u64,
    pub metrics: Vec<MetricComparison>,
    pub pass: bool,
}

type LogField = fn(&SessionLogEntry) -> Option<f64>;
type TraceField = fn(&TraceFrameMetrics) -> Option<f64>;

fn fields(tol: &Tolerances) -> Vec<(&'static str, DiffKind, f64, LogField, TraceField)> {
    vec![
        ("frame_span", DiffKind::Exact, tol.frame_span, |e| e.frame_span, |t| Some(t.frame_span)),
        (
            "packets_lost_interval",
            DiffKind::Exact,
            tol.packets_lost_interval,
            |e| e.packets_lost_interval.map(|v| v as f64),
            |t| Some(t.packets_lost_interval as f64),
        ),
        (
            "frame_interarrival",
            DiffKind::Timed,
            tol.frame_interarrival,
            |e| e.frame_interarrival,
            |t| t.frame_interarrival,
        ),
        ("vf_rtt", DiffKind::Timed, tol.vf_rtt, |e| e.vf_rtt, |t| t.vf_rtt),
        (
            "instant_throughput",
            DiffKind::Timed,
            tol.instant_throughput,
            |e| e.instant_throughput,
            |t| t.instant_throughput,
        ),
        (
            "peak_throughput",
            DiffKind::Timed,
            tol.peak_throughput,
            |e| e.peak_throughput,
            |t| t.peak_throughput,
        ),
        ("vf_jitter", DiffKind::Timed, tol.vf_jitter, |e| e.vf_jitter, |t| t.vf_jitter),
        (
            "packet_jitter_rfc3550",
            DiffKind::Timed,
            tol.packet_jitter_rfc3550,
            |e| e.packet_jitter_rfc3550,
            |t| Some(t.packet_jitter_rfc3550),
        ),
        ("fowd", DiffKind::Timed, tol.fowd, |e| e.fowd, |t| t.fowd),
    ]
}

/// Compares a session log with trace-derived metrics frame by frame.
/// Refuses when both sides carry a run id and they differ.
pub fn compare(
    log: &[SessionLogEntry],
    log_run_id: Option<&str>,
    trace: &TraceMetrics,
    tol: &Tolerances,
) -> Result<ValidationReport> {
    if let (Some(a), Some(b)) = (log_run_id, trace.run_id.as_deref()) {
        if a != b {
            return Err(Error::RunMismatch {
                log: a.to_string(),
                trace: b.to_string(),
            });
        }
    }
    let by_log: BTreeMap<u64, &SessionLogEntry> = log.iter().map(|e| (e.frame, e)).collect();
    let by_trace: BTreeMap<u64, &TraceFrameMetrics> = trace.frames.iter().map(|f| (f.frame, f)).collect();
    let only_in_log: Vec<u64> = by_log.keys().filter(|k| !by_trace.contains_key(k)).copied().collect();
    let only_in_trace: Vec<u64> = by_trace.keys().filter(|k| !by_log.contains_key(k)).copied().collect();
    let pairs: Vec<(&SessionLogEntry, &TraceFrameMetrics)> = by_log
        .iter()
        .filter_map(|(k, e)| by_trace.get(k).map(|t| (*e, *t)))
        .collect();

    let mut metrics = Vec::new();
    for (name, kind, tolerance, lf, tf) in fields(tol) {
        let available = name != "vf_rtt" || trace.vf_rtt_available;
        let log_vals: Vec<f64> = pairs.iter().filter_map(|(e, _)| lf(e)).collect();
        let trace_vals: Vec<f64> = pairs.iter().filter_map(|(_, t)| tf(t)).collect();
        let diffs: Vec<f64> = pairs
            .iter()
            .filter_map(|(e, t)| Some((lf(e)? - tf(t)?).abs()))
            .collect();
        // a value present on one side only counts as an infinite difference
        let one_sided = pairs.iter().filter(|(e, t)| lf(e).is_some() != tf(t).is_some()).count();
        let max = diffs.iter().copied().fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
        let mean = (!diffs.is_empty()).then(|| diffs.iter().sum::<f64>() / diffs.len() as f64);
        let judged = match kind {
            DiffKind::Exact => max,
            DiffKind::Timed => mean,
        };
        let pass = !available || (one_sided == 0 && judged.is_none_or(|d| d <= tolerance));
        metrics.push(MetricComparison {
            metric: name.to_string(),
            kind,
            available,
            count: diffs.len(),
            max_abs_diff: max,
            mean_abs_diff: mean,
            tolerance,
            pass,
            log_quantiles: Quantiles::of(&log_vals),
            trace_quantiles: Quantiles::of(&trace_vals),
        });
    }

    let pass = metrics.iter().all(|m| m.pass);
    Ok(ValidationReport {
        run_id: trace.run_id.clone().or(log_run_id.map(str::to_string)),
        capture: trace.capture.map(|c| c.to_string()),
        caveat: trace.capture_caveat(),
        frames_matched: pairs.len(),
        only_in_log,
        only_in_trace,
        late_filtered: trace.late_filtered,
        metrics,
        pass,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

impl ValidationReport {
    /// Aligned plain-text summary.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "run_id        {}", self.run_id.as_deref().unwrap_or("-"));
        let _ = writeln!(s, "capture       {}", self.capture.as_deref().unwrap_or("-"));
        let _ = writeln!(s, "frames        {} matched, {} log-only, {} trace-only, {} late-filtered",
            self.frames_matched,
            self.only_in_log.len(),
            self.only_in_trace.len(),
            self.late_filtered
        );
        if let Some(c) = &self.caveat {
            let _ = writeln!(s, "caveat        {c}");
        }
        let _ = writeln!(
            s,
            "\n{:<24} {:>6} {:>8} {:>14} {:>14} {:>10}  result",
            "metric", "kind", "count", "max_abs_diff", "mean_abs_diff", "tolerance"
        );
        for m in &self.metrics {
            let kind = match m.kind {
                DiffKind::Exact => "exact",
                DiffKind::Timed => "timed",
            };
            let result = match (m.available, m.pass) {
                (false, _) => "N/A",
                (true, true) => "PASS",
                (true, false) => "FAIL",
            };
            let _ = writeln!(
                s,
                "{:<24} {:>6} {:>8} {:>14} {:>14} {:>10}  {}",
                m.metric,
                kind,
                m.count,
                fmt_opt(m.max_abs_diff),
                fmt_opt(m.mean_abs_diff),
                m.tolerance,
                result
            );
        }
        let _ = writeln!(s, "\noverall       {}", if self.pass { "PASS" } else { "FAIL" });
        s
    }
}
