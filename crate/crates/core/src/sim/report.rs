use serde::{Deserialize, Serialize};

use crate::abr::Step;
use crate::metrics::MetricsSnapshot;
use crate::model::{DecisionTag, Micros, SessionLogEntry, MICROS_PER_SEC};
use crate::path::{DropCounters, PathCounters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t_s: f64,
    pub nfr: Option<f64>,
    pub vf_rtt_mean: Option<f64>,
    pub frame_tx_interval_mean: Option<f64>,
    pub peak_throughput_mean: Option<f64>,
    pub previous_mbps: f64,
    /// Rule output before any clamp.
    pub proposed_mbps: f64,
    pub capacity_bound_mbps: Option<f64>,
    pub bitrate_mbps: f64,
    pub decision: DecisionTag,
}

impl TickRecord {
    pub fn new(now: Micros, s: &MetricsSnapshot, step: &Step) -> Self {
        TickRecord {
            t_s: now as f64 / MICROS_PER_SEC as f64,
            nfr: s.nfr,
            vf_rtt_mean: s.vf_rtt_mean,
            frame_tx_interval_mean: s.frame_tx_interval_mean,
            peak_throughput_mean: s.peak_throughput_mean,
            previous_mbps: step.previous_mbps,
            proposed_mbps: step.proposed_mbps,
            capacity_bound_mbps: step.capacity_bound_mbps,
            bitrate_mbps: step.bitrate_mbps,
            decision: step.decision,
        }
    }
}

/// `encoded = complete + incomplete + discarded_late + in_flight`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameAccounting {
    pub encoded: u64,
    pub complete: u64,
    pub incomplete: u64,
    pub discarded_late: u64,
    pub in_flight: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalStats {
    pub start_s: f64,
    pub end_s: f64,
    /// Effects active at the interval midpoint.
    pub effects: Vec<String>,
    /// Time-weighted mean of the target bitrate.
    pub mean_bitrate_mbps: f64,
    /// Frames completely and timely received.
    pub frames_delivered: u64,
    pub fps_rx: f64,
    pub path_drops: DropCounters,
    pub path_drops_total: u64,
    /// Sum of the client-logged per-frame loss counts.
    pub packets_lost_logged: u64,
    pub vf_rtt_mean_ms: Option<f64>,
    pub peak_throughput_mean_mbps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub name: String,
    pub controller: String,
    pub seed: u64,
    pub duration_s: f64,
    pub frames: FrameAccounting,
    pub path: PathCounters,
    pub ul_packets: u64,
    pub totals: IntervalStats,
    pub intervals: Vec<IntervalStats>,
    pub controller_ticks: Vec<TickRecord>,
}

/// Running inputs for interval statistics.
#[derive(Debug, Default)]
pub(crate) struct Accumulator {
    /// `(time, bitrate)` at each change, starting at t = 0.
    pub bitrate_steps: Vec<(Micros, f64)>,
    pub completions: Vec<Micros>,
    /// Drop counters captured at each interval boundary, in order.
    pub boundary_drops: Vec<(Micros, DropCounters)>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

impl Accumulator {
    fn mean_bitrate(&self, a: Micros, b: Micros) -> f64 {
        let mut area = 0.0;
        for (i, &(t, v)) in self.bitrate_steps.iter().enumerate() {
            let next = self.bitrate_steps.get(i + 1).map_or(Micros::MAX, |s| s.0);
            let (lo, hi) = (t.max(a), next.min(b));
            if hi > lo {
                area += v * (hi - lo) as f64;
            }
        }
        area / (b - a) as f64
    }

    fn drops_at(&self, t: Micros, end_counters: &DropCounters) -> DropCounters {
        self.boundary_drops
            .iter()
            .find(|(bt, _)| *bt == t)
            .map(|(_, c)| *c)
            .unwrap_or(*end_counters)
    }

    pub fn interval(
        &self,
        a: Micros,
        b: Micros,
        effects: Vec<String>,
        log: &[SessionLogEntry],
        end_counters: &DropCounters,
    ) -> IntervalStats {
        let (a_s, b_s) = (a as f64 / MICROS_PER_SEC as f64, b as f64 / MICROS_PER_SEC as f64);
        let delivered = self.completions.iter().filter(|&&t| t >= a && t < b).count() as u64;
        let entries: Vec<&SessionLogEntry> = log
            .iter()
            .filter(|e| {
                let t = (e.t_s * MICROS_PER_SEC as f64).round() as Micros;
                t >= a && t < b
            })
            .collect();
        let drops = self.drops_at(b, end_counters).since(&self.drops_at(a, end_counters));
        IntervalStats {
            start_s: a_s,
            end_s: b_s,
            effects,
            mean_bitrate_mbps: self.mean_bitrate(a, b),
            frames_delivered: delivered,
            fps_rx: delivered as f64 / (b_s - a_s),
            path_drops: drops,
            path_drops_total: drops.total(),
            packets_lost_logged: entries.iter().filter_map(|e| e.packets_lost_interval).sum(),
            vf_rtt_mean_ms: mean(entries.iter().filter_map(|e| e.vf_rtt)),
            peak_throughput_mean_mbps: mean(entries.iter().filter_map(|e| e.peak_throughput)),
        }
    }
}
