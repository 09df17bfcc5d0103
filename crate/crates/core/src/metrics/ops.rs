//! Per-frame metric definitions as pure functions of frame records and
//! counters. Durations are returned in milliseconds, rates in Mbps.

use crate::model::{micros_to_ms, FrameRecord, FrameStatus};

/// First-to-last shard arrival time of a complete frame.
pub fn frame_span(rec: &FrameRecord) -> Option<f64> {
    if rec.status != FrameStatus::Complete {
        return None;
    }
    let (first, last) = (rec.rx_first?, rec.rx_last?);
    Some(micros_to_ms(last as i64 - first as i64))
}

/// Interval between the completions of two consecutively delivered frames.
pub fn frame_interarrival(prev: &FrameRecord, cur: &FrameRecord) -> Option<f64> {
    let d = cur.rx_last? as i64 - prev.rx_last? as i64;
    (d >= 0).then(|| micros_to_ms(d))
}

/// First-shard departure to feedback reception at the server.
pub fn vf_rtt(rec: &FrameRecord) -> Option<f64> {
    let fb = rec.feedback_rx_time?;
    Some(micros_to_ms(fb as i64 - rec.tx_first as i64))
}

/// Packets missing between two frame receptions, estimated from the advance
/// of the highest received sequence number. A regression counts as reordering.
pub fn packet_loss_interval(prev_max_seq: i64, cur_max_seq: i64, received: u64) -> u64 {
    if cur_max_seq <= prev_max_seq {
        return 0;
    }
    ((cur_max_seq - prev_max_seq) as u64).saturating_sub(received)
}

/// Received video payload rate over an interval.
pub fn instant_throughput(bytes: u64, interval_ms: f64) -> Option<f64> {
    (interval_ms > 0.0).then(|| bytes as f64 * 8.0 / (interval_ms * 1_000.0))
}

/// Frame size over its span: a capacity estimate for burst-sent frames.
pub fn peak_throughput(rec: &FrameRecord) -> Option<f64> {
    let span = frame_span(rec)?;
    instant_throughput(rec.frame_bytes, span)
}

/// Network frame ratio: mean transmit interval over mean receive interval.
pub fn nfr(mean_rx_interval: f64, mean_tx_interval: f64) -> Option<f64> {
    (mean_rx_interval > 0.0 && mean_tx_interval >= 0.0).then(|| mean_tx_interval / mean_rx_interval)
}
