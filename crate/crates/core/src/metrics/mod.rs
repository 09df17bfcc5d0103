//! Online computation of the per-frame network metrics and the windowed
//! averages handed to the bitrate controllers.
//!
//! The engine has a client half, driven by packet arrivals and frame
//! completions, and a server half, driven by frame transmissions and the
//! arrival of the per-frame feedback packet. Client-side results travel to
//! the server inside [`FrameMetrics`].

mod jitter;
mod kalman;
pub mod ops;
mod window;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use jitter::PacketJitter;
pub use kalman::{delay_gradient, KalmanFowd, KalmanParams};
pub use window::{sample_std_dev, SlidingWindow};

use crate::model::{micros_to_ms, FrameRecord, LateFramePolicy, Micros, VideoPacket};

/// Which shard of each frame anchors the one-way delay gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FowdAnchor {
    First,
    #[default]
    Last,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Samples per sliding window (applies to every window).
    pub window: usize,
    pub kalman: KalmanParams,
    pub fowd_anchor: FowdAnchor,
    pub late_frame_policy: LateFramePolicy,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            window: 256,
            kalman: KalmanParams::default(),
            fowd_anchor: FowdAnchor::Last,
            late_frame_policy: LateFramePolicy::HigherIndexCompleted,
        }
    }
}

/// Client-side measurements for one timely received frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMetrics {
    pub frame_index: u64,
    pub tx_first: Micros,
    pub rx_last: Micros,
    pub frame_bytes: u64,
    pub frame_span: Option<f64>,
    pub frame_interarrival: Option<f64>,
    pub packets_lost_interval: u64,
    pub instant_throughput: Option<f64>,
    pub peak_throughput: Option<f64>,
    pub vf_jitter: Option<f64>,
    pub packet_jitter: f64,
    pub fowd: Option<f64>,
    pub frame_interarrival_mean: Option<f64>,
    pub interarrival_samples: usize,
}

/// Network-state summary valid after the latest feedback arrival.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub frame_span: Option<f64>,
    pub frame_interarrival: Option<f64>,
    pub vf_rtt: Option<f64>,
    pub packets_lost_interval: Option<u64>,
    pub instant_throughput: Option<f64>,
    pub peak_throughput: Option<f64>,
    pub vf_jitter: Option<f64>,
    pub packet_jitter_rfc3550: Option<f64>,
    pub fowd: Option<f64>,
    pub frame_interarrival_mean: Option<f64>,
    pub frame_tx_interval_mean: Option<f64>,
    pub vf_rtt_mean: Option<f64>,
    pub peak_throughput_mean: Option<f64>,
    pub nfr: Option<f64>,
    pub rx_samples: usize,
    pub tx_samples: usize,
    pub rtt_samples: usize,
    pub peak_samples: usize,
}

#[derive(Debug, Clone, Copy)]
struct Anchor {
    tx: Micros,
    rx: Micros,
    rx_last: Micros,
}

const SEQ_PRUNE_THRESHOLD: usize = 1 << 18;
const SEQ_PRUNE_KEEP: u64 = 1 << 16;

#[derive(Debug, Clone)]
pub struct MetricsEngine {
    cfg: MetricsConfig,
    // client half
    seen: HashSet<u64>,
    max_seq: i64,
    interval_base_seq: i64,
    interval_received: u64,
    interval_bytes: u64,
    jitter: PacketJitter<f64>,
    prev: Option<Anchor>,
    rx_window: SlidingWindow<f64>,
    fowd: KalmanFowd<f64>,
    // server half
    last_tx: Option<Micros>,
    tx_window: SlidingWindow<f64>,
    rtt_window: SlidingWindow<f64>,
    peak_window: SlidingWindow<f64>,
    snapshot: MetricsSnapshot,
}

impl MetricsEngine {
    pub fn new(cfg: MetricsConfig) -> Self {
        let n = cfg.window;
        MetricsEngine {
            seen: HashSet::new(),
            max_seq: -1,
            interval_base_seq: -1,
            interval_received: 0,
            interval_bytes: 0,
            jitter: PacketJitter::default(),
            prev: None,
            rx_window: SlidingWindow::new(n),
            fowd: KalmanFowd::new(&cfg.kalman),
            last_tx: None,
            tx_window: SlidingWindow::new(n),
            rtt_window: SlidingWindow::new(n),
            peak_window: SlidingWindow::new(n),
            snapshot: MetricsSnapshot::default(),
            cfg,
        }
    }

    pub fn config(&self) -> &MetricsConfig {
        &self.cfg
    }

    /// Client: a video shard arrived. Returns `false` for duplicates, which
    /// are excluded from every count.
    pub fn on_video_packet(&mut self, pkt: &VideoPacket, rx_time: Micros) -> bool {
        if !self.seen.insert(pkt.seq) {
            return false;
        }
        if self.seen.len() > SEQ_PRUNE_THRESHOLD {
            let floor = (self.max_seq.max(0) as u64).saturating_sub(SEQ_PRUNE_KEEP);
            self.seen.retain(|&s| s >= floor);
        }
        self.max_seq = self.max_seq.max(pkt.seq as i64);
        self.interval_received += 1;
        self.interval_bytes += pkt.payload_bytes as u64;
        self.jitter
            .on_packet(micros_to_ms(pkt.tx_time as i64), micros_to_ms(rx_time as i64));
        true
    }

    /// Client: a frame completed and passed the timeliness screen.
    pub fn on_frame_complete(&mut self, rec: &FrameRecord) -> FrameMetrics {
        let rx_last = rec.rx_last.expect("complete frame has arrivals");
        let anchor = match self.cfg.fowd_anchor {
            FowdAnchor::First => Anchor {
                tx: rec.tx_first,
                rx: rec.rx_first.expect("complete frame has arrivals"),
                rx_last,
            },
            FowdAnchor::Last => Anchor {
                tx: rec.tx_last,
                rx: rx_last,
                rx_last,
            },
        };

        let lost = ops::packet_loss_interval(self.interval_base_seq, self.max_seq, self.interval_received);
        let interarrival = self
            .prev
            .map(|p| micros_to_ms(rx_last as i64 - p.rx_last as i64))
            .filter(|d| *d >= 0.0);
        let throughput = interarrival.and_then(|d| ops::instant_throughput(self.interval_bytes, d));
        let fowd = self.prev.map(|p| {
            let g = delay_gradient(p.tx as i64, p.rx as i64, anchor.tx as i64, anchor.rx as i64);
            self.fowd.update(micros_to_ms(g))
        });
        if let Some(d) = interarrival {
            self.rx_window.push(d);
        }

        self.interval_base_seq = self.max_seq;
        self.interval_received = 0;
        self.interval_bytes = 0;
        self.prev = Some(anchor);

        FrameMetrics {
            frame_index: rec.frame_index,
            tx_first: rec.tx_first,
            rx_last,
            frame_bytes: rec.frame_bytes,
            frame_span: ops::frame_span(rec),
            frame_interarrival: interarrival,
            packets_lost_interval: lost,
            instant_throughput: throughput,
            peak_throughput: ops::peak_throughput(rec),
            vf_jitter: self.rx_window.std_dev(),
            packet_jitter: self.jitter.value(),
            fowd,
            frame_interarrival_mean: self.rx_window.mean(),
            interarrival_samples: self.rx_window.len(),
        }
    }

    /// Server: a frame burst left at `tx_time`.
    pub fn on_frame_sent(&mut self, tx_time: Micros) {
        if let Some(prev) = self.last_tx.replace(tx_time) {
            self.tx_window.push(micros_to_ms(tx_time as i64 - prev as i64));
        }
        let tx_mean = self.tx_window.mean();
        self.snapshot.frame_tx_interval_mean = tx_mean;
        self.snapshot.tx_samples = self.tx_window.len();
        self.snapshot.nfr = self
            .snapshot
            .frame_interarrival_mean
            .zip(tx_mean)
            .and_then(|(rx, tx)| ops::nfr(rx, tx));
    }

    /// Server: the feedback packet for `fm` arrived at `feedback_rx`.
    pub fn on_feedback(&mut self, fm: &FrameMetrics, feedback_rx: Micros) -> &MetricsSnapshot {
        let rtt = micros_to_ms(feedback_rx as i64 - fm.tx_first as i64);
        self.rtt_window.push(rtt);
        if let Some(p) = fm.peak_throughput {
            self.peak_window.push(p);
        }
        let tx_mean = self.tx_window.mean();
        self.snapshot = MetricsSnapshot {
            frame_span: fm.frame_span,
            frame_interarrival: fm.frame_interarrival,
            vf_rtt: Some(rtt),
            packets_lost_interval: Some(fm.packets_lost_interval),
            instant_throughput: fm.instant_throughput,
            peak_throughput: fm.peak_throughput,
            vf_jitter: fm.vf_jitter,
            packet_jitter_rfc3550: Some(fm.packet_jitter),
            fowd: fm.fowd,
            frame_interarrival_mean: fm.frame_interarrival_mean,
            frame_tx_interval_mean: tx_mean,
            vf_rtt_mean: self.rtt_window.mean(),
            peak_throughput_mean: self.peak_window.mean(),
            nfr: fm
                .frame_interarrival_mean
                .zip(tx_mean)
                .and_then(|(rx, tx)| ops::nfr(rx, tx)),
            rx_samples: fm.interarrival_samples,
            tx_samples: self.tx_window.len(),
            rtt_samples: self.rtt_window.len(),
            peak_samples: self.peak_window.len(),
        };
        &self.snapshot
    }

    pub fn snapshot(&self) -> &MetricsSnapshot {
        &self.snapshot
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{shard_frame, FrameStatus, ReassemblyEvent, Reassembler};

    fn deliver(engine: &mut MetricsEngine, r: &mut Reassembler, pkts: &[VideoPacket], rx: Micros) -> Option<FrameMetrics> {
        let mut out = None;
        for p in pkts {
            engine.on_video_packet(p, rx);
            if let Some(ReassemblyEvent::Completed(rec)) = r.ingest(p, rx) {
                out = Some(engine.on_frame_complete(&rec));
            }
        }
        out
    }

    fn frame(idx: u64, seq: &mut u64, tx: Micros) -> Vec<VideoPacket> {
        let mut p = shard_frame(5_000, 1400, idx, *seq).unwrap();
        *seq += p.len() as u64;
        for s in &mut p {
            s.tx_time = tx;
        }
        p
    }

    #[test]
    fn skipped_frame_doubles_interarrival() {
        let mut e = MetricsEngine::new(MetricsConfig::default());
        let mut r = Reassembler::new(LateFramePolicy::HigherIndexCompleted);
        let mut seq = 0;
        let period = 11_111;
        let f0 = frame(0, &mut seq, 0);
        let f1 = frame(1, &mut seq, period);
        let f2 = frame(2, &mut seq, 2 * period);
        deliver(&mut e, &mut r, &f0, 1_000);
        // frame 1 loses one shard
        deliver(&mut e, &mut r, &f1[1..], period + 1_000);
        let m = deliver(&mut e, &mut r, &f2, 2 * period + 1_000).unwrap();
        assert!((m.frame_interarrival.unwrap() - 22.222).abs() < 1e-9);
        assert_eq!(m.packets_lost_interval, 1);
        assert_eq!(r.record(1).unwrap().status, FrameStatus::Incomplete);
    }

    #[test]
    fn duplicates_not_counted() {
        let mut e = MetricsEngine::new(MetricsConfig::default());
        let mut seq = 0;
        let f0 = frame(0, &mut seq, 0);
        assert!(e.on_video_packet(&f0[0], 10));
        assert!(!e.on_video_packet(&f0[0], 11));
    }

    #[test]
    fn nfr_from_periodic_drop() {
        // every 10th frame dropped: the receive interval is 10/9 of the send
        // interval on average
        let mut e = MetricsEngine::new(MetricsConfig::default());
        let mut r = Reassembler::new(LateFramePolicy::HigherIndexCompleted);
        let mut seq = 0;
        let mut last = None;
        for k in 0..2000u64 {
            let tx = k * 11_111;
            e.on_frame_sent(tx);
            let f = frame(k, &mut seq, tx);
            if k % 10 == 9 {
                continue;
            }
            if let Some(m) = deliver(&mut e, &mut r, &f, tx + 2_000) {
                last = Some(e.on_feedback(&m, tx + 3_000).clone());
            }
        }
        let nfr = last.unwrap().nfr.unwrap();
        assert!((nfr - 0.9).abs() < 0.01, "nfr = {nfr}");
    }

    #[test]
    fn clean_stream_nfr_is_one() {
        let mut e = MetricsEngine::new(MetricsConfig::default());
        let mut r = Reassembler::new(LateFramePolicy::HigherIndexCompleted);
        let mut seq = 0;
        let mut snap = None;
        for k in 0..1000u64 {
            let tx = k * 1_000_000 / 90;
            e.on_frame_sent(tx);
            let m = deliver(&mut e, &mut r, &frame(k, &mut seq, tx), tx + 1_500).unwrap();
            snap = Some(e.on_feedback(&m, tx + 2_000).clone());
        }
        let s = snap.unwrap();
        assert!((s.nfr.unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(s.packets_lost_interval, Some(0));
        assert_eq!(s.vf_rtt, Some(2.0));
        assert_eq!(s.fowd, Some(0.0));
    }
}
