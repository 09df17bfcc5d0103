//! Recomputes per-frame metrics from a packet trace without touching the
//! online metrics engine. Everything here works from trace rows alone:
//! reassembly, duplicate suppression, the late-frame screen, windows, the
//! RFC 3550 jitter recurrence and the delay-gradient filter are written out
//! again so that agreement with the session log means something.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::tsv::{CapturePoint, Direction, ParsedTrace, TraceRow};
use crate::metrics::{FowdAnchor, MetricsConfig};
use crate::model::{LateFramePolicy, StreamId, SHARD_HEADER_BYTES};

/// Metrics for one completely and timely received frame, as seen at the
/// capture point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFrameMetrics {
    pub frame: u64,
    pub frame_span: f64,
    pub frame_interarrival: Option<f64>,
    pub vf_rtt: Option<f64>,
    pub packets_lost_interval: u64,
    pub instant_throughput: Option<f64>,
    pub peak_throughput: Option<f64>,
    pub vf_jitter: Option<f64>,
    pub packet_jitter_rfc3550: f64,
    pub fowd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetrics {
    pub run_id: Option<String>,
    pub capture: Option<CapturePoint>,
    pub frames: Vec<TraceFrameMetrics>,
    /// Whole frames rejected because a newer frame completed first.
    pub late_filtered: u64,
    /// Frames seen at the capture point but never whole.
    pub incomplete: u64,
    /// Video rows that repeated an already seen sequence number.
    pub duplicates: u64,
    /// False when no UL feedback rows were supplied.
    pub vf_rtt_available: bool,
}

impl TraceMetrics {
    /// Packets dropped downstream of the capture point are invisible to the
    /// trace, so its loss counts and spans are optimistic.
    pub fn capture_caveat(&self) -> Option<String> {
        match self.capture {
            Some(CapturePoint::ClientIngress) => None,
            Some(p) => Some(format!(
                "trace captured at {p}: losses and delays after this point are not visible, \
                 so loss counts and spans are optimistic"
            )),
            None => Some("trace capture point unknown: results may exclude downstream losses".into()),
        }
    }
}

struct PartialFrame {
    frame_bytes: u64,
    expected: u32,
    shards: HashSet<u32>,
    tx_first: u64,
    tx_last: u64,
    rx_first: u64,
    rx_last: u64,
}

/// Scalar Kalman filter on the per-frame delay gradient with an online
/// measurement-noise estimate.
struct GradientFilter {
    m: f64,
    e: f64,
    q: f64,
    r: f64,
    chi: f64,
}

impl GradientFilter {
    fn step(&mut self, d: f64) -> f64 {
        let z = d - self.m;
        let p = self.e + self.q;
        let k = p / (p + self.r);
        self.m += k * z;
        self.e = (1.0 - k) * p;
        self.r = (self.chi * self.r + (1.0 - self.chi) * z * z).max(f64::MIN_POSITIVE);
        self.m
    }
}

fn ms(us: i64) -> f64 {
    us as f64 / 1_000.0
}

fn window_push(w: &mut VecDeque<f64>, cap: usize, x: f64) {
    if w.len() == cap {
        w.pop_front();
    }
    w.push_back(x);
}

fn window_std(w: &VecDeque<f64>) -> Option<f64> {
    if w.len() < 2 {
        return None;
    }
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let ss: f64 = w.iter().map(|x| (x - mean) * (x - mean)).sum();
    Some((ss / (n - 1.0)).sqrt())
}

/// Server receive time of each frame's feedback packet.
fn feedback_times(ul: &[TraceRow]) -> HashMap<u64, u64> {
    let mut out = HashMap::new();
    for r in ul {
        if r.dir == Direction::Ul && r.stream == StreamId::Feedback {
            out.entry(r.frame).or_insert(r.time_us);
        }
    }
    out
}

/// Derives per-frame metrics from the DL rows of `dl`. Feedback rows for
/// VF-RTT are taken from `ul` (normally the server-egress trace) when given.
pub fn metrics_from_trace(dl: &ParsedTrace, ul: Option<&ParsedTrace>, cfg: &MetricsConfig) -> TraceMetrics {
    let feedback = ul.map(|t| feedback_times(&t.rows)).filter(|f| !f.is_empty());
    let n = cfg.window;

    let mut seen_seq: HashSet<u64> = HashSet::new();
    let mut max_seq: Option<u64> = None;
    let mut base_seq: Option<u64> = None;
    let mut received = 0u64;
    let mut bytes = 0u64;
    let mut duplicates = 0u64;

    let mut jitter = 0.0f64;
    let mut last_transit_us: Option<i64> = None;

    let mut partial: BTreeMap<u64, PartialFrame> = BTreeMap::new();
    let mut whole: HashSet<u64> = HashSet::new();
    let mut newest_done: Option<u64> = None;
    let mut late = 0u64;

    let mut prev: Option<(u64, u64, u64)> = None; // (tx anchor, rx anchor, rx_last)
    let mut rx_window: VecDeque<f64> = VecDeque::with_capacity(n);
    let mut filter = GradientFilter {
        m: 0.0,
        e: cfg.kalman.initial_error,
        q: cfg.kalman.state_noise,
        r: cfg.kalman.initial_measurement_noise,
        chi: cfg.kalman.forgetting,
    };
    let mut frames = Vec::new();

    for r in dl.rows.iter().filter(|r| r.dir == Direction::Dl && r.stream == StreamId::Video) {
        if !seen_seq.insert(r.seq) {
            duplicates += 1;
            continue;
        }
        let payload = r.len.saturating_sub(SHARD_HEADER_BYTES) as u64;
        max_seq = Some(max_seq.map_or(r.seq, |m| m.max(r.seq)));
        received += 1;
        bytes += payload;

        let transit = r.time_us as i64 - r.tx_us as i64;
        if let Some(last) = last_transit_us.replace(transit) {
            jitter += (ms(transit - last).abs() - jitter) / 16.0;
        }

        if r.pkts_in_frame == 0 || r.pkt_idx >= r.pkts_in_frame || whole.contains(&r.frame) {
            continue;
        }
        let f = partial.entry(r.frame).or_insert_with(|| PartialFrame {
            frame_bytes: r.frame_bytes,
            expected: r.pkts_in_frame,
            shards: HashSet::new(),
            tx_first: r.tx_us,
            tx_last: r.tx_us,
            rx_first: r.time_us,
            rx_last: r.time_us,
        });
        if f.expected != r.pkts_in_frame || !f.shards.insert(r.pkt_idx) {
            continue;
        }
        f.tx_first = f.tx_first.min(r.tx_us);
        f.tx_last = f.tx_last.max(r.tx_us);
        f.rx_first = f.rx_first.min(r.time_us);
        f.rx_last = f.rx_last.max(r.time_us);
        if f.shards.len() as u32 != f.expected {
            continue;
        }

        let f = partial.remove(&r.frame).expect("frame present");
        whole.insert(r.frame);
        if cfg.late_frame_policy == LateFramePolicy::HigherIndexCompleted && newest_done.is_some_and(|h| h > r.frame) {
            late += 1;
            continue;
        }
        newest_done = Some(newest_done.map_or(r.frame, |h| h.max(r.frame)));

        let lost = match (base_seq, max_seq) {
            (Some(b), Some(m)) if m > b => (m - b).saturating_sub(received),
            (None, Some(m)) => (m + 1).saturating_sub(received),
            _ => 0,
        };
        let span_us = (f.rx_last - f.rx_first) as i64;
        let span = ms(span_us);
        let interarrival = prev.map(|p| ms(f.rx_last as i64 - p.2 as i64));
        let instant = interarrival.filter(|d| *d > 0.0).map(|d| bytes as f64 * 8.0 / (d * 1_000.0));
        let peak = (span > 0.0).then(|| f.frame_bytes as f64 * 8.0 / (span * 1_000.0));
        let (tx_a, rx_a) = match cfg.fowd_anchor {
            FowdAnchor::First => (f.tx_first, f.rx_first),
            FowdAnchor::Last => (f.tx_last, f.rx_last),
        };
        let fowd = prev.map(|(ptx, prx, _)| {
            let d = (rx_a as i64 - prx as i64) - (tx_a as i64 - ptx as i64);
            filter.step(ms(d))
        });
        if let Some(d) = interarrival {
            window_push(&mut rx_window, n, d);
        }
        let vf_rtt = feedback
            .as_ref()
            .and_then(|fb| fb.get(&r.frame))
            .map(|&t| ms(t as i64 - f.tx_first as i64));

        frames.push(TraceFrameMetrics {
            frame: r.frame,
            frame_span: span,
            frame_interarrival: interarrival,
            vf_rtt,
            packets_lost_interval: lost,
            instant_throughput: instant,
            peak_throughput: peak,
            vf_jitter: window_std(&rx_window),
            packet_jitter_rfc3550: jitter,
            fowd,
        });

        base_seq = max_seq;
        received = 0;
        bytes = 0;
        prev = Some((tx_a, rx_a, f.rx_last));
    }

    TraceMetrics {
        run_id: dl.meta.run_id.clone(),
        capture: dl.meta.capture,
        frames,
        late_filtered: late,
        incomplete: partial.len() as u64,
        duplicates,
        vf_rtt_available: feedback.is_some(),
    }
}
