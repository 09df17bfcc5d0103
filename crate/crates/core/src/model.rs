//! Shared vocabulary: packets, frames, the simulated clock and session-log
//! records.
//!
//! All timestamps are integer microseconds on a single clock shared by the
//! server and the client.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simulated time in microseconds.
pub type Micros = u64;

pub const MICROS_PER_SEC: u64 = 1_000_000;

/// Default maximum shard payload.
pub const DEFAULT_MAX_PAYLOAD: u32 = 1400;

/// Transport + prefix overhead added on the wire to each sharded packet
/// (1446 bytes on the wire for a 1400-byte payload).
pub const SHARD_HEADER_BYTES: u32 = 46;

pub fn micros_to_ms(us: i64) -> f64 {
    us as f64 / 1_000.0
}

pub fn secs_to_micros(s: f64) -> Micros {
    (s * MICROS_PER_SEC as f64).round().max(0.0) as Micros
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamId {
    Video,
    Audio,
    Tracking,
    Haptics,
    Statistics,
    Feedback,
}

impl StreamId {
    pub const ALL: [StreamId; 6] = [
        StreamId::Video,
        StreamId::Audio,
        StreamId::Tracking,
        StreamId::Haptics,
        StreamId::Statistics,
        StreamId::Feedback,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StreamId::Video => "video",
            StreamId::Audio => "audio",
            StreamId::Tracking => "tracking",
            StreamId::Haptics => "haptics",
            StreamId::Statistics => "statistics",
            StreamId::Feedback => "feedback",
        }
    }

    /// Streams that are fragmented into `max_payload` shards and carry the
    /// shard header on the wire.
    pub fn is_sharded(self) -> bool {
        matches!(self, StreamId::Video | StreamId::Audio)
    }
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StreamId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        StreamId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| format!("unknown stream `{s}`"))
    }
}

/// One transport packet with its application prefix.
///
/// For sharded streams `payload_bytes` excludes the shard header; for the
/// small control streams it is the full on-wire size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoPacket {
    pub stream: StreamId,
    pub seq: u64,
    pub frame_index: u64,
    pub packet_index: u32,
    pub packets_in_frame: u32,
    pub frame_bytes: u64,
    pub payload_bytes: u32,
    pub tx_time: Micros,
    pub rx_time: Option<Micros>,
}

impl VideoPacket {
    /// A single-packet message on one of the control streams.
    pub fn control(stream: StreamId, seq: u64, frame_index: u64, bytes: u32, tx_time: Micros) -> Self {
        VideoPacket {
            stream,
            seq,
            frame_index,
            packet_index: 0,
            packets_in_frame: 1,
            frame_bytes: bytes as u64,
            payload_bytes: bytes,
            tx_time,
            rx_time: None,
        }
    }

    pub fn wire_bytes(&self) -> u32 {
        if self.stream.is_sharded() {
            self.payload_bytes + SHARD_HEADER_BYTES
        } else {
            self.payload_bytes
        }
    }
}

/// Fragments one frame into consecutive shards starting at `base_seq`.
///
/// Every shard but the last carries `max_payload` bytes; the last carries the
/// remainder.
pub fn shard_frame(frame_bytes: u64, max_payload: u32, frame_index: u64, base_seq: u64) -> Result<Vec<VideoPacket>> {
    if frame_bytes == 0 {
        return Err(Error::InvalidFrame("frame of zero bytes".into()));
    }
    if max_payload == 0 {
        return Err(Error::InvalidFrame("max_payload must be at least one byte".into()));
    }
    let count = frame_bytes.div_ceil(max_payload as u64);
    let count = u32::try_from(count)
        .map_err(|_| Error::InvalidFrame(format!("{frame_bytes} bytes need too many shards")))?;
    let last = frame_bytes - (count as u64 - 1) * max_payload as u64;

    Ok((0..count)
        .map(|i| VideoPacket {
            stream: StreamId::Video,
            seq: base_seq + i as u64,
            frame_index,
            packet_index: i,
            packets_in_frame: count,
            frame_bytes,
            payload_bytes: if i + 1 == count { last as u32 } else { max_payload },
            tx_time: 0,
            rx_time: None,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameStatus {
    Complete,
    Incomplete,
    DiscardedLate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub frame_bytes: u64,
    pub packets_in_frame: u32,
    pub tx_first: Micros,
    pub tx_last: Micros,
    pub rx_first: Option<Micros>,
    pub rx_last: Option<Micros>,
    pub shards_received: u32,
    pub status: FrameStatus,
    pub feedback_rx_time: Option<Micros>,
}

impl FrameRecord {
    /// Complete or discarded-late: every shard arrived.
    pub fn is_whole(&self) -> bool {
        self.shards_received == self.packets_in_frame
    }
}

/// How completed frames are screened for timeliness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LateFramePolicy {
    /// A frame that completes after a frame with a higher index is stale.
    #[default]
    HigherIndexCompleted,
    Off,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReassemblyEvent {
    Completed(FrameRecord),
    DiscardedLate(FrameRecord),
}

#[derive(Debug, Clone)]
struct FrameSlot {
    record: FrameRecord,
    seen: Vec<u64>,
}

impl FrameSlot {
    fn mark(&mut self, index: u32) -> bool {
        let (word, bit) = ((index / 64) as usize, index % 64);
        let fresh = self.seen[word] & (1 << bit) == 0;
        self.seen[word] |= 1 << bit;
        fresh
    }
}

/// Client-side frame reassembly with duplicate suppression and the
/// late-frame screen.
#[derive(Debug, Clone, Default)]
pub struct Reassembler {
    frames: BTreeMap<u64, FrameSlot>,
    policy: LateFramePolicy,
    highest_completed: Option<u64>,
}

impl Reassembler {
    pub fn new(policy: LateFramePolicy) -> Self {
        Reassembler {
            policy,
            ..Default::default()
        }
    }

    /// Feeds one arriving video shard. Returns an event when this shard is
    /// the last missing one of its frame.
    pub fn ingest(&mut self, pkt: &VideoPacket, rx_time: Micros) -> Option<ReassemblyEvent> {
        if pkt.packets_in_frame == 0 || pkt.packet_index >= pkt.packets_in_frame {
            return None;
        }
        let slot = self.frames.entry(pkt.frame_index).or_insert_with(|| FrameSlot {
            record: FrameRecord {
                frame_index: pkt.frame_index,
                frame_bytes: pkt.frame_bytes,
                packets_in_frame: pkt.packets_in_frame,
                tx_first: pkt.tx_time,
                tx_last: pkt.tx_time,
                rx_first: None,
                rx_last: None,
                shards_received: 0,
                status: FrameStatus::Incomplete,
                feedback_rx_time: None,
            },
            seen: vec![0; (pkt.packets_in_frame as usize).div_ceil(64)],
        });
        if slot.record.packets_in_frame != pkt.packets_in_frame || slot.record.is_whole() {
            return None;
        }
        if !slot.mark(pkt.packet_index) {
            return None;
        }

        let rec = &mut slot.record;
        rec.shards_received += 1;
        rec.tx_first = rec.tx_first.min(pkt.tx_time);
        rec.tx_last = rec.tx_last.max(pkt.tx_time);
        rec.rx_first = Some(rec.rx_first.map_or(rx_time, |t| t.min(rx_time)));
        rec.rx_last = Some(rec.rx_last.map_or(rx_time, |t| t.max(rx_time)));
        if !rec.is_whole() {
            return None;
        }

        let stale = self.policy == LateFramePolicy::HigherIndexCompleted
            && self.highest_completed.is_some_and(|h| h > rec.frame_index);
        if stale {
            rec.status = FrameStatus::DiscardedLate;
            return Some(ReassemblyEvent::DiscardedLate(rec.clone()));
        }
        rec.status = FrameStatus::Complete;
        self.highest_completed = Some(self.highest_completed.map_or(rec.frame_index, |h| h.max(rec.frame_index)));
        Some(ReassemblyEvent::Completed(rec.clone()))
    }

    pub fn record(&self, frame_index: u64) -> Option<&FrameRecord> {
        self.frames.get(&frame_index).map(|s| &s.record)
    }

    pub fn record_mut(&mut self, frame_index: u64) -> Option<&mut FrameRecord> {
        self.frames.get_mut(&frame_index).map(|s| &mut s.record)
    }

    pub fn records(&self) -> impl Iterator<Item = &FrameRecord> {
        self.frames.values().map(|s| &s.record)
    }
}

/// Monotone simulated clock.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimClock {
    now: Micros,
}

impl SimClock {
    pub fn now(&self) -> Micros {
        self.now
    }

    /// Moves the clock forward. Panics if `t` lies in the past.
    pub fn advance_to(&mut self, t: Micros) {
        assert!(t >= self.now, "clock moved backwards: {} -> {}", self.now, t);
        self.now = t;
    }
}

/// Controller decision recorded with every tick and log entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionTag {
    Decrease,
    Hold,
    IncreaseExplore,
    CapClamp,
    RangeClamp,
}

/// One line of the session log: everything known about a completely and
/// timely received frame at the moment its feedback reached the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionLogEntry {
    pub t_s: f64,
    pub frame: u64,
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
    pub bitrate_mbps: f64,
    pub decision: DecisionTag,
}

/// Serializes a session log as JSON lines.
pub fn session_log_jsonl(entries: &[SessionLogEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("log entry serializes"));
        out.push('\n');
    }
    out
}

/// Parses JSON-lines session log text; blank lines are ignored.
pub fn parse_session_log(text: &str) -> Result<Vec<SessionLogEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::SessionLog {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}
