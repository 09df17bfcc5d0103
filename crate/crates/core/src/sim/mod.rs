//! Discrete-event simulation of one streamer-client session.

mod events;
mod report;
mod traffic;

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use events::{EventQueue, Priority};
pub use report::{FrameAccounting, IntervalStats, RunReport, TickRecord};
pub use traffic::{LatencyModel, TrafficProfile};

use crate::abr::{BitrateController, FrameStats};
use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::metrics::{FrameMetrics, MetricsEngine};
use crate::model::{
    micros_to_ms, secs_to_micros, shard_frame, DecisionTag, FrameStatus, Micros, ReassemblyEvent, Reassembler,
    SessionLogEntry, StreamId, VideoPacket, MICROS_PER_SEC,
};
use crate::path::{DropCause, NetemPass, NetworkPath};
use crate::trace::{CapturePoint, Direction, TraceMeta, TraceRow, TraceWriter};
use report::Accumulator;

/// Independent random streams derived from the scenario seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum RngStream {
    FrameSize = 1,
    Latency = 2,
    Path = 3,
    Haptics = 4,
    Controller = 5,
}

fn stream_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone)]
struct DlPacket {
    pkt: VideoPacket,
    pid: usize,
}

#[derive(Debug, Clone)]
enum UlPayload {
    Tracking,
    Feedback(Box<FrameMetrics>),
    Statistics {
        dl_delay_ms: f64,
        decoder_ms: f64,
    },
}

#[derive(Debug, Clone)]
enum Event {
    EffectChange,
    Tick,
    Frame(u64),
    Audio(u64),
    Haptics,
    Tracking(u64),
    NetemExit(DlPacket, NetemPass),
    ClientArrival(DlPacket),
    SendStatistics { frame: u64, dl_delay_ms: f64, decoder_ms: f64 },
    ServerArrival(VideoPacket, UlPayload),
    EndOfRun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fate {
    Pending,
    Delivered,
    Dropped(DropCause),
}

/// Trace output for one capture point. DL rows wait until the packet's fate
/// is known so the `drop_stage` column can be filled in.
struct Capture<'a> {
    point: CapturePoint,
    writer: TraceWriter<&'a mut dyn Write>,
    pending: VecDeque<(TraceRow, Option<usize>)>,
}

impl Capture<'_> {
    fn flush_resolved(&mut self, fates: &[Fate], end: bool) -> Result<()> {
        while let Some((_, pid)) = self.pending.front() {
            let stage = match pid.map(|p| fates[p]) {
                None | Some(Fate::Delivered) => None,
                Some(Fate::Dropped(c)) => Some(c.as_str().to_string()),
                Some(Fate::Pending) if end => Some("in_flight".to_string()),
                Some(Fate::Pending) => break,
            };
            let (mut row, _) = self.pending.pop_front().expect("front exists");
            row.drop_stage = stage;
            self.writer.write_row(&row)?;
        }
        Ok(())
    }
}

fn trace_row(now: Micros, dir: Direction, p: &VideoPacket) -> TraceRow {
    TraceRow {
        time_us: now,
        dir,
        len: p.wire_bytes(),
        stream: p.stream,
        seq: p.seq,
        frame: p.frame_index,
        pkt_idx: p.packet_index,
        pkts_in_frame: p.packets_in_frame,
        frame_bytes: p.frame_bytes,
        tx_us: p.tx_time,
        drop_stage: None,
    }
}

pub struct RunOutput {
    pub run_id: String,
    pub log: Vec<SessionLogEntry>,
    pub report: RunReport,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    run_id: String,
    duration: Micros,
    queue: EventQueue<Event>,
    path: NetworkPath,
    metrics: MetricsEngine,
    reassembler: Reassembler,
    controller: Box<dyn BitrateController>,
    rng_frames: ChaCha8Rng,
    rng_latency: ChaCha8Rng,
    rng_haptics: ChaCha8Rng,
    seq: [u64; 6],
    fates: Vec<Fate>,
    captures: Vec<Capture<'a>>,
    frames_encoded: u64,
    frame_lost_shard: Vec<bool>,
    encoder_ms: Vec<f64>,
    last_tracking_delay_ms: Option<f64>,
    last_decision: DecisionTag,
    log: Vec<SessionLogEntry>,
    ticks: Vec<TickRecord>,
    acc: Accumulator,
    boundaries: VecDeque<Micros>,
}

fn stream_slot(s: StreamId) -> usize {
    match s {
        StreamId::Video => 0,
        StreamId::Audio => 1,
        StreamId::Tracking => 2,
        StreamId::Haptics => 3,
        StreamId::Statistics => 4,
        StreamId::Feedback => 5,
    }
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig, traces: Vec<(CapturePoint, &'a mut dyn Write)>) -> Result<Self> {
        let run_id = cfg.run_id();
        let mut captures = Vec::new();
        for (point, out) in traces {
            let meta = TraceMeta {
                run_id: Some(run_id.clone()),
                capture: Some(point),
            };
            captures.push(Capture {
                point,
                writer: TraceWriter::new(out, &meta)?,
                pending: VecDeque::new(),
            });
        }
        let controller_seed = stream_rng(cfg.seed, RngStream::Controller).gen::<u64>();
        let controller = cfg.controller.build(cfg.traffic.fps, controller_seed);
        let duration = cfg.duration_us();
        let mut boundaries: Vec<Micros> = cfg
            .report_intervals()
            .iter()
            .flat_map(|&(a, b)| [secs_to_micros(a), secs_to_micros(b)])
            .collect();
        boundaries.sort_unstable();
        boundaries.dedup();
        let acc = Accumulator {
            bitrate_steps: vec![(0, controller.bitrate())],
            ..Default::default()
        };
        Ok(Sim {
            run_id,
            duration,
            queue: EventQueue::new(),
            path: NetworkPath::new(cfg.path.clone(), cfg.wifi.clone(), stream_rng(cfg.seed, RngStream::Path)),
            metrics: MetricsEngine::new(cfg.metrics.clone()),
            reassembler: Reassembler::new(cfg.metrics.late_frame_policy),
            controller,
            rng_frames: stream_rng(cfg.seed, RngStream::FrameSize),
            rng_latency: stream_rng(cfg.seed, RngStream::Latency),
            rng_haptics: stream_rng(cfg.seed, RngStream::Haptics),
            seq: [0; 6],
            fates: Vec::new(),
            captures,
            frames_encoded: 0,
            frame_lost_shard: Vec::new(),
            encoder_ms: Vec::new(),
            last_tracking_delay_ms: None,
            last_decision: DecisionTag::Hold,
            log: Vec::new(),
            ticks: Vec::new(),
            acc,
            boundaries: boundaries.into(),
            cfg,
        })
    }

    fn next_seq(&mut self, s: StreamId) -> u64 {
        let slot = &mut self.seq[stream_slot(s)];
        *slot += 1;
        *slot - 1
    }

    fn schedule_initial(&mut self) {
        let t = &self.cfg.traffic;
        for b in self.path.effect_boundaries() {
            if b > 0 && b < self.duration {
                self.queue.push(b, Priority::EffectChange, Event::EffectChange);
            }
        }
        let period = self.controller.period_us();
        if period > 0 && period <= self.duration {
            self.queue.push(period, Priority::ControllerTick, Event::Tick);
        }
        self.queue.push(0, Priority::Normal, Event::Frame(0));
        if t.audio {
            self.queue.push(0, Priority::Normal, Event::Audio(0));
        }
        if t.tracking {
            self.queue.push(0, Priority::Normal, Event::Tracking(0));
        }
        if t.haptics {
            let first = t.haptics_gap(&mut self.rng_haptics);
            if first < self.duration {
                self.queue.push(first, Priority::Normal, Event::Haptics);
            }
        }
        self.queue.push(self.duration, Priority::EndOfRun, Event::EndOfRun);
    }

    fn capture(&mut self, point: CapturePoint, row: TraceRow, pid: Option<usize>) {
        if let Some(c) = self.captures.iter_mut().find(|c| c.point == point) {
            c.pending.push_back((row, pid));
        }
    }

    fn resolve(&mut self, pid: usize, fate: Fate) {
        self.fates[pid] = fate;
    }

    fn drop_packet(&mut self, dp: &DlPacket, cause: DropCause) {
        self.resolve(dp.pid, Fate::Dropped(cause));
        if dp.pkt.stream == StreamId::Video {
            self.frame_lost_shard[dp.pkt.frame_index as usize] = true;
        }
    }

    fn send_dl(&mut self, now: Micros, pkt: VideoPacket) {
        let pid = self.fates.len();
        self.fates.push(Fate::Pending);
        self.capture(CapturePoint::ServerEgress, trace_row(now, Direction::Dl, &pkt), Some(pid));
        let ingress = self.path.dl_ingress(now, pkt.wire_bytes() as u64);
        let dup = ingress.duplicate.map(|o| {
            let pid = self.fates.len();
            self.fates.push(Fate::Pending);
            (pid, o)
        });
        for (pid, outcome) in std::iter::once((pid, ingress.original)).chain(dup) {
            let dp = DlPacket { pkt: pkt.clone(), pid };
            match outcome {
                Ok(pass) => self.queue.push(pass.exit_us, Priority::Normal, Event::NetemExit(dp, pass)),
                Err(cause) => self.drop_packet(&dp, cause),
            }
        }
    }

    fn send_ul(&mut self, now: Micros, pkt: VideoPacket, payload: UlPayload) {
        let at = self.path.ul_send(now, pkt.wire_bytes() as u64);
        self.queue.push(at, Priority::Normal, Event::ServerArrival(pkt, payload));
    }

    fn on_frame(&mut self, now: Micros, k: u64) {
        let t = &self.cfg.traffic;
        let bytes = t.draw_frame_bytes(self.controller.bitrate(), &mut self.rng_frames);
        self.encoder_ms.push(self.cfg.latency.encoder(&mut self.rng_latency));
        self.frame_lost_shard.push(false);
        let base = self.seq[stream_slot(StreamId::Video)];
        let shards = shard_frame(bytes, t.max_payload, k, base).expect("frame size and payload are positive");
        self.seq[stream_slot(StreamId::Video)] += shards.len() as u64;
        for mut s in shards {
            s.tx_time = now;
            self.send_dl(now, s);
        }
        self.metrics.on_frame_sent(now);
        self.frames_encoded += 1;
        let next = t.frame_time(k + 1);
        if next < self.duration {
            self.queue.push(next, Priority::Normal, Event::Frame(k + 1));
        }
    }

    fn on_audio(&mut self, now: Micros, k: u64) {
        let t = &self.cfg.traffic;
        let base = self.seq[stream_slot(StreamId::Audio)];
        let shards = shard_frame(t.audio_bytes as u64, t.max_payload, k, base).expect("audio size is positive");
        self.seq[stream_slot(StreamId::Audio)] += shards.len() as u64;
        for mut s in shards {
            s.stream = StreamId::Audio;
            s.tx_time = now;
            self.send_dl(now, s);
        }
        let next = t.audio_time(k + 1);
        if next < self.duration {
            self.queue.push(next, Priority::Normal, Event::Audio(k + 1));
        }
    }

    fn on_haptics(&mut self, now: Micros) {
        let seq = self.next_seq(StreamId::Haptics);
        let t = &self.cfg.traffic;
        let pkt = VideoPacket::control(StreamId::Haptics, seq, seq, t.haptics_bytes, now);
        self.send_dl(now, pkt);
        let next = now + t.haptics_gap(&mut self.rng_haptics);
        if next < self.duration {
            self.queue.push(next, Priority::Normal, Event::Haptics);
        }
    }

    fn on_tracking(&mut self, now: Micros, k: u64) {
        let seq = self.next_seq(StreamId::Tracking);
        let t = &self.cfg.traffic;
        let pkt = VideoPacket::control(StreamId::Tracking, seq, k, t.tracking_bytes, now);
        self.send_ul(now, pkt, UlPayload::Tracking);
        let next = t.tracking_time(k + 1);
        if next < self.duration {
            self.queue.push(next, Priority::Normal, Event::Tracking(k + 1));
        }
    }

    fn on_netem_exit(&mut self, now: Micros, dp: DlPacket, pass: NetemPass) {
        if let Err(cause) = self.path.netem_exit(&pass) {
            self.drop_packet(&dp, cause);
            return;
        }
        self.capture(CapturePoint::PathEgress, trace_row(now, Direction::Dl, &dp.pkt), Some(dp.pid));
        match self.path.wifi_dl(now, dp.pkt.wire_bytes() as u64) {
            Ok(at) => self.queue.push(at, Priority::Normal, Event::ClientArrival(dp)),
            Err(cause) => self.drop_packet(&dp, cause),
        }
    }

    fn on_client_arrival(&mut self, now: Micros, dp: DlPacket) {
        self.path.mark_delivered();
        self.resolve(dp.pid, Fate::Delivered);
        self.capture(CapturePoint::ClientIngress, trace_row(now, Direction::Dl, &dp.pkt), None);
        if dp.pkt.stream != StreamId::Video {
            return;
        }
        self.metrics.on_video_packet(&dp.pkt, now);
        if let Some(ReassemblyEvent::Completed(rec)) = self.reassembler.ingest(&dp.pkt, now) {
            let fm = self.metrics.on_frame_complete(&rec);
            self.acc.completions.push(now);
            let t = &self.cfg.traffic;
            let seq = self.next_seq(StreamId::Feedback);
            let fb = VideoPacket::control(StreamId::Feedback, seq, rec.frame_index, t.feedback_bytes, now);
            self.send_ul(now, fb, UlPayload::Feedback(Box::new(fm)));
            if t.statistics {
                let decoder_ms = self.cfg.latency.decoder(&mut self.rng_latency);
                let at = now + (decoder_ms * 1_000.0).round() as Micros + t.vsync_us();
                let dl_delay_ms = micros_to_ms(rec.rx_last.expect("complete") as i64 - rec.tx_first as i64);
                self.queue.push(
                    at,
                    Priority::Normal,
                    Event::SendStatistics {
                        frame: rec.frame_index,
                        dl_delay_ms,
                        decoder_ms,
                    },
                );
            }
        }
    }

    fn on_send_statistics(&mut self, now: Micros, frame: u64, dl_delay_ms: f64, decoder_ms: f64) {
        let seq = self.next_seq(StreamId::Statistics);
        let pkt = VideoPacket::control(StreamId::Statistics, seq, frame, self.cfg.traffic.statistics_bytes, now);
        self.send_ul(now, pkt, UlPayload::Statistics { dl_delay_ms, decoder_ms });
    }

    fn on_server_arrival(&mut self, now: Micros, pkt: VideoPacket, payload: UlPayload) {
        self.capture(CapturePoint::ServerEgress, trace_row(now, Direction::Ul, &pkt), None);
        match payload {
            UlPayload::Tracking => {
                self.last_tracking_delay_ms = Some(micros_to_ms(now as i64 - pkt.tx_time as i64));
            }
            UlPayload::Statistics { dl_delay_ms, decoder_ms } => {
                let frame_bytes = self
                    .reassembler
                    .record(pkt.frame_index)
                    .map_or(0, |r| r.frame_bytes);
                let stats = FrameStats {
                    payload_bits: frame_bytes as f64 * 8.0,
                    network_delay_ms: Some(self.last_tracking_delay_ms.unwrap_or(0.0) + dl_delay_ms),
                    encoder_latency_ms: self.encoder_ms.get(pkt.frame_index as usize).copied(),
                    decoder_latency_ms: Some(decoder_ms),
                };
                self.controller.observe_frame(&stats);
            }
            UlPayload::Feedback(fm) => {
                if let Some(r) = self.reassembler.record_mut(fm.frame_index) {
                    r.feedback_rx_time = Some(now);
                }
                let s = self.metrics.on_feedback(&fm, now);
                let entry = SessionLogEntry {
                    t_s: now as f64 / MICROS_PER_SEC as f64,
                    frame: fm.frame_index,
                    frame_span: s.frame_span,
                    frame_interarrival: s.frame_interarrival,
                    vf_rtt: s.vf_rtt,
                    packets_lost_interval: s.packets_lost_interval,
                    instant_throughput: s.instant_throughput,
                    peak_throughput: s.peak_throughput,
                    vf_jitter: s.vf_jitter,
                    packet_jitter_rfc3550: s.packet_jitter_rfc3550,
                    fowd: s.fowd,
                    frame_interarrival_mean: s.frame_interarrival_mean,
                    frame_tx_interval_mean: s.frame_tx_interval_mean,
                    vf_rtt_mean: s.vf_rtt_mean,
                    peak_throughput_mean: s.peak_throughput_mean,
                    nfr: s.nfr,
                    bitrate_mbps: self.controller.bitrate(),
                    decision: self.last_decision,
                };
                self.log.push(entry);
            }
        }
    }

    fn on_tick(&mut self, now: Micros) {
        let step = self.controller.step(self.metrics.snapshot());
        self.ticks.push(TickRecord::new(now, self.metrics.snapshot(), &step));
        self.last_decision = step.decision;
        if self.acc.bitrate_steps.last().map(|s| s.1) != Some(step.bitrate_mbps) {
            self.acc.bitrate_steps.push((now, step.bitrate_mbps));
        }
        let next = now + self.controller.period_us();
        if next <= self.duration {
            self.queue.push(next, Priority::ControllerTick, Event::Tick);
        }
    }

    fn run(mut self) -> Result<RunOutput> {
        self.schedule_initial();
        let mut clock = crate::model::SimClock::default();
        while let Some((now, ev)) = self.queue.pop() {
            clock.advance_to(now);
            // Effect changes at a boundary belong to the interval they end, so
            // flush drops count against the limit that caused them.
            let closes_at_now = !matches!(ev, Event::EffectChange);
            while self.boundaries.front().is_some_and(|&b| b < now || (b == now && closes_at_now)) {
                let b = self.boundaries.pop_front().expect("front exists");
                self.acc.boundary_drops.push((b, self.path.counters().drops));
            }
            match ev {
                Event::EndOfRun => break,
                Event::EffectChange => self.path.apply_effects(now),
                Event::Tick => self.on_tick(now),
                Event::Frame(k) => self.on_frame(now, k),
                Event::Audio(k) => self.on_audio(now, k),
                Event::Haptics => self.on_haptics(now),
                Event::Tracking(k) => self.on_tracking(now, k),
                Event::NetemExit(dp, pass) => self.on_netem_exit(now, dp, pass),
                Event::ClientArrival(dp) => self.on_client_arrival(now, dp),
                Event::SendStatistics {
                    frame,
                    dl_delay_ms,
                    decoder_ms,
                } => self.on_send_statistics(now, frame, dl_delay_ms, decoder_ms),
                Event::ServerArrival(pkt, payload) => self.on_server_arrival(now, pkt, payload),
            }
            for c in &mut self.captures {
                c.flush_resolved(&self.fates, false)?;
            }
        }
        for c in self.captures.drain(..) {
            let mut c = c;
            c.flush_resolved(&self.fates, true)?;
            c.writer.finish()?;
        }
        Ok(self.finish())
    }

    fn frame_accounting(&self) -> FrameAccounting {
        let mut acc = FrameAccounting {
            encoded: self.frames_encoded,
            ..Default::default()
        };
        for k in 0..self.frames_encoded {
            match self.reassembler.record(k).map(|r| r.status) {
                Some(FrameStatus::Complete) => acc.complete += 1,
                Some(FrameStatus::DiscardedLate) => acc.discarded_late += 1,
                _ if self.frame_lost_shard[k as usize] => acc.incomplete += 1,
                _ => acc.in_flight += 1,
            }
        }
        acc
    }

    fn finish(self) -> RunOutput {
        let end_drops = self.path.counters().drops;
        let describe = |a: Micros, b: Micros| {
            let mid = a + (b - a) / 2;
            self.cfg
                .path
                .effects
                .iter()
                .filter(|e| (e.start_us()..e.end_us()).contains(&mid))
                .map(|e| e.effect.describe())
                .collect::<Vec<_>>()
        };
        let intervals = self
            .cfg
            .report_intervals()
            .iter()
            .map(|&(a, b)| {
                let (a, b) = (secs_to_micros(a), secs_to_micros(b).min(self.duration));
                self.acc.interval(a, b, describe(a, b), &self.log, &end_drops)
            })
            .collect();
        let totals = self.acc.interval(0, self.duration, Vec::new(), &self.log, &end_drops);
        let report = RunReport {
            run_id: self.run_id.clone(),
            name: self.cfg.name.clone(),
            controller: self.controller.name().to_string(),
            seed: self.cfg.seed,
            duration_s: self.cfg.duration_s,
            frames: self.frame_accounting(),
            path: *self.path.counters(),
            ul_packets: self.path.ul_sent(),
            totals,
            intervals,
            controller_ticks: self.ticks,
        };
        RunOutput {
            run_id: self.run_id,
            log: self.log,
            report,
        }
    }
}

/// Runs a scenario without packet traces.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput> {
    run_scenario_traced(cfg, Vec::new())
}

/// Runs a scenario, streaming a TSV trace for each requested capture point.
pub fn run_scenario_traced<'a>(
    cfg: &'a ScenarioConfig,
    traces: Vec<(CapturePoint, &'a mut dyn Write)>,
) -> Result<RunOutput> {
    cfg.validate()?;
    Sim::new(cfg, traces)?.run()
}
