//! DL and UL path model: a netem-like effects stage followed by a Wi-Fi hop.
//!
//! The path is not an event loop of its own. The simulator calls
//! [`NetworkPath::dl_ingress`] when a packet leaves the server, schedules the
//! returned netem exit, calls [`NetworkPath::netem_exit`] and
//! [`NetworkPath::wifi_dl`] at that instant, and finally
//! [`NetworkPath::mark_delivered`] when the packet reaches the client.

mod effects;
mod fifo;
mod wifi;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use effects::{
    active_effects, effect_boundaries, validate_effects, ActiveEffects, Effect, RateLimit, TimedEffect,
};
pub use fifo::{mbps_to_bps, serialization_ns, FifoLink, Nanos, QueueFull};
pub use wifi::{RssiProfile, WifiLinkModel};

use crate::error::{Error, Result};
use crate::model::{Micros, MICROS_PER_SEC};
use fifo::{ns_to_us_ceil, NANOS_PER_MICRO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropCause {
    /// Bernoulli loss effect.
    Random,
    /// Rate-limiter queue full.
    Overflow,
    /// Still queued when the rate limit was removed.
    Flush,
    /// Residual Wi-Fi loss.
    WifiLoss,
    /// Access-point queue full.
    WifiOverflow,
}

impl DropCause {
    pub fn as_str(self) -> &'static str {
        match self {
            DropCause::Random => "random",
            DropCause::Overflow => "overflow",
            DropCause::Flush => "flush",
            DropCause::WifiLoss => "wifi_loss",
            DropCause::WifiOverflow => "wifi_overflow",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "random" => DropCause::Random,
            "overflow" => DropCause::Overflow,
            "flush" => DropCause::Flush,
            "wifi_loss" => DropCause::WifiLoss,
            "wifi_overflow" => DropCause::WifiOverflow,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounters {
    pub random: u64,
    pub overflow: u64,
    pub flush: u64,
    pub wifi_loss: u64,
    pub wifi_overflow: u64,
}

impl DropCounters {
    pub fn add(&mut self, cause: DropCause) {
        *match cause {
            DropCause::Random => &mut self.random,
            DropCause::Overflow => &mut self.overflow,
            DropCause::Flush => &mut self.flush,
            DropCause::WifiLoss => &mut self.wifi_loss,
            DropCause::WifiOverflow => &mut self.wifi_overflow,
        } += 1;
    }

    pub fn total(&self) -> u64 {
        self.random + self.overflow + self.flush + self.wifi_loss + self.wifi_overflow
    }

    pub fn since(&self, earlier: &DropCounters) -> DropCounters {
        DropCounters {
            random: self.random - earlier.random,
            overflow: self.overflow - earlier.overflow,
            flush: self.flush - earlier.flush,
            wifi_loss: self.wifi_loss - earlier.wifi_loss,
            wifi_overflow: self.wifi_overflow - earlier.wifi_overflow,
        }
    }
}

/// DL packet accounting. `offered + duplicated = delivered + drops + in_flight`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathCounters {
    pub offered: u64,
    pub duplicated: u64,
    pub delivered: u64,
    pub drops: DropCounters,
}

impl PathCounters {
    pub fn in_flight(&self) -> u64 {
        self.offered + self.duplicated - self.delivered - self.drops.total()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathConfig {
    pub dl_base_latency_ms: f64,
    pub ul_base_latency_ms: f64,
    /// Rate-limiter queue limit used when an effect does not set its own.
    pub queue_packets: usize,
    /// Drop whatever is still queued when a rate limit ends, as deleting the
    /// qdisc does.
    pub flush_on_rate_limit_removal: bool,
    pub effects: Vec<TimedEffect>,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            dl_base_latency_ms: 0.5,
            ul_base_latency_ms: 0.5,
            queue_packets: 1000,
            flush_on_rate_limit_removal: true,
            effects: Vec::new(),
        }
    }
}

impl PathConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        for (name, v) in [
            ("dl_base_latency_ms", self.dl_base_latency_ms),
            ("ul_base_latency_ms", self.ul_base_latency_ms),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{prefix}.{name}"), "must be non-negative"));
            }
        }
        if self.queue_packets == 0 {
            return Err(Error::config(format!("{prefix}.queue_packets"), "must be positive"));
        }
        validate_effects(&self.effects, &format!("{prefix}.effects"))
    }
}

/// A packet that cleared the effects stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetemPass {
    /// When the packet leaves the effects stage.
    pub exit_us: Micros,
    epoch: u64,
    limiter_departure: Option<Nanos>,
}

pub type NetemOutcome = std::result::Result<NetemPass, DropCause>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DlIngress {
    pub original: NetemOutcome,
    pub duplicate: Option<NetemOutcome>,
}

fn ms_to_us(ms: f64) -> Micros {
    (ms * 1_000.0).round() as Micros
}

pub struct NetworkPath {
    cfg: PathConfig,
    wifi: WifiLinkModel,
    active: ActiveEffects,
    limiter: FifoLink,
    /// Bumped on each flush; `flush_times[e]` ends epoch `e`.
    epoch: u64,
    flush_times: Vec<Nanos>,
    wifi_dl: FifoLink,
    wifi_ul: FifoLink,
    rng: ChaCha8Rng,
    counters: PathCounters,
    ul_sent: u64,
}

impl NetworkPath {
    pub fn new(cfg: PathConfig, wifi: WifiLinkModel, rng: ChaCha8Rng) -> Self {
        let active = active_effects(&cfg.effects, 0);
        NetworkPath {
            cfg,
            wifi,
            active,
            limiter: FifoLink::new(),
            epoch: 0,
            flush_times: Vec::new(),
            wifi_dl: FifoLink::new(),
            wifi_ul: FifoLink::new(),
            rng,
            counters: PathCounters::default(),
            ul_sent: 0,
        }
    }

    pub fn config(&self) -> &PathConfig {
        &self.cfg
    }

    pub fn wifi(&self) -> &WifiLinkModel {
        &self.wifi
    }

    pub fn active(&self) -> &ActiveEffects {
        &self.active
    }

    pub fn counters(&self) -> &PathCounters {
        &self.counters
    }

    pub fn ul_sent(&self) -> u64 {
        self.ul_sent
    }

    pub fn set_rssi_profile(&mut self, profile: RssiProfile) {
        self.wifi.set_rssi_profile(profile);
    }

    /// Instants at which [`Self::apply_effects`] must be called.
    pub fn effect_boundaries(&self) -> Vec<Micros> {
        effect_boundaries(&self.cfg.effects)
    }

    /// Re-evaluates the active effect set at `now`.
    pub fn apply_effects(&mut self, now: Micros) {
        let next = active_effects(&self.cfg.effects, now);
        if self.active.rate_limit.is_some() && next.rate_limit.is_none() && self.cfg.flush_on_rate_limit_removal {
            let t = now * NANOS_PER_MICRO;
            // Counted here so drops land at the instant the limit ends; the
            // packets' exit events only report the cause.
            self.counters.drops.flush += self.limiter.flush(t) as u64;
            self.flush_times.push(t);
            self.epoch += 1;
        }
        self.active = next;
    }

    fn bernoulli(&mut self, p: f64) -> bool {
        p > 0.0 && self.rng.gen::<f64>() < p
    }

    fn drop(&mut self, cause: DropCause) -> DropCause {
        self.counters.drops.add(cause);
        cause
    }

    fn through_netem(&mut self, now: Micros, wire_bytes: u64) -> NetemOutcome {
        let now_ns = now * NANOS_PER_MICRO;
        let mut limiter_departure = None;
        let mut t = now_ns;
        if let Some(rl) = self.active.rate_limit {
            let limit = rl.queue_packets.unwrap_or(self.cfg.queue_packets);
            match self
                .limiter
                .offer(now_ns, wire_bytes, mbps_to_bps(rl.rate_mbps), 0, Some(limit), rl.queue_bytes)
            {
                Ok(d) => {
                    limiter_departure = Some(d);
                    t = d;
                }
                Err(QueueFull) => return Err(self.drop(DropCause::Overflow)),
            }
        }
        if let Some((lo, hi)) = self.active.jitter {
            let ms = if hi > lo { self.rng.gen_range(lo..=hi) } else { lo };
            t += (ms * 1e6).round() as Nanos;
        }
        Ok(NetemPass {
            exit_us: ns_to_us_ceil(t),
            epoch: self.epoch,
            limiter_departure,
        })
    }

    /// Runs a packet sent at `now` through loss, duplication, rate limit and
    /// jitter. A duplicate enters the limiter right behind its original.
    pub fn dl_ingress(&mut self, now: Micros, wire_bytes: u64) -> DlIngress {
        self.counters.offered += 1;
        if self.bernoulli(self.active.loss) {
            return DlIngress {
                original: Err(self.drop(DropCause::Random)),
                duplicate: None,
            };
        }
        let dup = self.bernoulli(self.active.duplicate);
        let original = self.through_netem(now, wire_bytes);
        let duplicate = dup.then(|| {
            self.counters.duplicated += 1;
            self.through_netem(now, wire_bytes)
        });
        DlIngress { original, duplicate }
    }

    /// Called at `pass.exit_us`. Fails if a flush removed the packet from the
    /// limiter queue before it departed.
    pub fn netem_exit(&mut self, pass: &NetemPass) -> std::result::Result<(), DropCause> {
        if pass.epoch < self.epoch {
            if let Some(d) = pass.limiter_departure {
                if d > self.flush_times[pass.epoch as usize] {
                    return Err(DropCause::Flush);
                }
            }
        }
        Ok(())
    }

    /// Wi-Fi hop for a packet reaching the access point at `now`; returns the
    /// client arrival time.
    pub fn wifi_dl(&mut self, now: Micros, wire_bytes: u64) -> std::result::Result<Micros, DropCause> {
        let base = ms_to_us(self.cfg.dl_base_latency_ms);
        if !self.wifi.enabled {
            return Ok(now + base);
        }
        let rssi = self.wifi.rssi_at(now as f64 / MICROS_PER_SEC as f64);
        if self.bernoulli(self.wifi.loss_for_rssi(rssi)) {
            return Err(self.drop(DropCause::WifiLoss));
        }
        let rate = mbps_to_bps(self.wifi.rate_for_rssi(rssi));
        let overhead = (self.wifi.per_packet_overhead_us * 1_000.0).round() as Nanos;
        match self.wifi_dl.offer(
            now * NANOS_PER_MICRO,
            wire_bytes,
            rate,
            overhead,
            Some(self.wifi.queue_packets),
            None,
        ) {
            Ok(d) => Ok(ns_to_us_ceil(d) + base),
            Err(QueueFull) => Err(self.drop(DropCause::WifiOverflow)),
        }
    }

    pub fn mark_delivered(&mut self) {
        self.counters.delivered += 1;
    }

    /// UL is reliable: Wi-Fi serialization then base latency, independent of
    /// the DL queues.
    pub fn ul_send(&mut self, now: Micros, wire_bytes: u64) -> Micros {
        self.ul_sent += 1;
        let base = ms_to_us(self.cfg.ul_base_latency_ms);
        if !self.wifi.enabled {
            return now + base;
        }
        let rssi = self.wifi.rssi_at(now as f64 / MICROS_PER_SEC as f64);
        let rate = mbps_to_bps(self.wifi.rate_for_rssi(rssi));
        let overhead = (self.wifi.per_packet_overhead_us * 1_000.0).round() as Nanos;
        let d = self
            .wifi_ul
            .offer(now * NANOS_PER_MICRO, wire_bytes, rate, overhead, None, None)
            .expect("UL queue is unbounded");
        ns_to_us_ceil(d) + base
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn path(effects: Vec<TimedEffect>, wifi: WifiLinkModel) -> NetworkPath {
        NetworkPath::new(
            PathConfig {
                effects,
                ..Default::default()
            },
            wifi,
            rng(),
        )
    }

    fn no_wifi() -> WifiLinkModel {
        WifiLinkModel {
            enabled: false,
            ..Default::default()
        }
    }

    fn whole_run(effect: Effect) -> Vec<TimedEffect> {
        vec![TimedEffect {
            start_s: 0.0,
            end_s: 1e6,
            effect,
        }]
    }

    /// Pushes a packet end to end, returning its arrival time.
    fn deliver(p: &mut NetworkPath, now: Micros, bytes: u64) -> Vec<std::result::Result<Micros, DropCause>> {
        let ing = p.dl_ingress(now, bytes);
        [Some(ing.original), ing.duplicate]
            .into_iter()
            .flatten()
            .map(|o| {
                let pass = o?;
                p.netem_exit(&pass)?;
                let at = p.wifi_dl(pass.exit_us, bytes)?;
                p.mark_delivered();
                Ok(at)
            })
            .collect()
    }

    #[test]
    fn identity_path() {
        let mut p = path(vec![], no_wifi());
        for t in [0, 17, 1_000_000] {
            assert_eq!(deliver(&mut p, t, 1446), vec![Ok(t + 500)]);
        }
        assert_eq!(p.ul_send(42, 56), 542);
    }

    #[test]
    fn binomial_loss() {
        let mut p = path(whole_run(Effect::Loss { p: 0.02 }), no_wifi());
        for i in 0..10_000 {
            deliver(&mut p, i * 100, 1446);
        }
        let drops = p.counters().drops.random as f64;
        let sigma = (10_000.0f64 * 0.02 * 0.98).sqrt();
        assert!((drops - 200.0).abs() < 3.0 * sigma, "{drops}");
        assert_eq!(p.counters().in_flight(), 0);
    }

    #[test]
    fn duplicates_are_counted() {
        let mut p = path(whole_run(Effect::Duplicate { p: 0.02 }), no_wifi());
        for i in 0..10_000 {
            deliver(&mut p, i * 100, 1446);
        }
        let c = p.counters();
        assert!(c.duplicated > 140 && c.duplicated < 260);
        assert_eq!(c.delivered, c.offered + c.duplicated);
    }

    /// Independent fluid model: the backlog drains at `rate` between offers
    /// and a packet is refused when it would push the backlog past `cap`.
    fn token_bucket_drops(arrivals: &[(f64, f64)], rate_bps: f64, cap: f64) -> u64 {
        let (mut backlog, mut last, mut drops) = (0.0f64, 0.0f64, 0);
        for &(t, bytes) in arrivals {
            backlog = (backlog - (t - last) * rate_bps / 8.0).max(0.0);
            last = t;
            if backlog + bytes > cap {
                drops += 1;
            } else {
                backlog += bytes;
            }
        }
        drops
    }

    #[test]
    fn overflow_matches_token_bucket() {
        let fx = whole_run(Effect::RateLimit {
            rate_mbps: 90.0,
            queue_packets: Some(100_000),
            queue_bytes: Some(200_000),
        });
        let mut p = path(fx, no_wifi());
        // 100 Mbps of 1446-byte packets for 10 s, one every 115.68 us
        let n = 86_445u64;
        let arrivals: Vec<(f64, f64)> = (0..n).map(|i| ((i * 11_568 / 100) as f64 / 1e6, 1446.0)).collect();
        for &(t, b) in &arrivals {
            deliver(&mut p, (t * 1e6).round() as Micros, b as u64);
        }
        let got = p.counters().drops.overflow;
        let oracle = token_bucket_drops(&arrivals, 90e6, 200_000.0);
        let rough = 0.1 * n as f64 - 200_000.0 / 1446.0;
        assert!((got as f64 - oracle as f64).abs() <= 0.01 * oracle as f64, "{got} vs {oracle}");
        assert!((got as f64 - rough).abs() <= 0.02 * rough, "{got} vs {rough}");
    }

    #[test]
    fn limiter_rate_bound() {
        let fx = whole_run(Effect::RateLimit {
            rate_mbps: 90.0,
            queue_packets: None,
            queue_bytes: None,
        });
        let mut p = path(fx, no_wifi());
        let mut last = 0;
        let mut delivered_bytes = 0u64;
        for i in 0..200_000u64 {
            for at in deliver(&mut p, i * 50, 1446).into_iter().flatten() {
                if at <= 10_000_000 {
                    delivered_bytes += 1446;
                }
                assert!(at >= last, "limiter reordered");
                last = at;
            }
        }
        let rate = delivered_bytes as f64 * 8.0 / 10.0;
        assert!((90e6 * 0.99..=90e6 * 1.01).contains(&rate), "{rate}");
    }

    #[test]
    fn flush_on_removal() {
        let fx = vec![TimedEffect {
            start_s: 0.0,
            end_s: 1.0,
            effect: Effect::RateLimit {
                rate_mbps: 1.0,
                queue_packets: None,
                queue_bytes: None,
            },
        }];
        let mut p = path(fx, no_wifi());
        // 20 packets of 12.5 ms each, the last ones still queued at t = 0.1 s
        let passes: Vec<_> = (0..20).map(|_| p.dl_ingress(0, 1562).original.unwrap()).collect();
        p.apply_effects(1_000_000);
        let flushed = passes.iter().filter(|x| p.netem_exit(x).is_err()).count();
        assert_eq!(p.counters().drops.flush as usize, flushed);
        assert!(flushed == 0, "all departed within the second");
        let mut q = path(
            vec![TimedEffect {
                start_s: 0.0,
                end_s: 0.1,
                effect: Effect::RateLimit {
                    rate_mbps: 1.0,
                    queue_packets: None,
                    queue_bytes: None,
                },
            }],
            no_wifi(),
        );
        let passes: Vec<_> = (0..20).map(|_| q.dl_ingress(0, 1562).original.unwrap()).collect();
        q.apply_effects(100_000);
        let flushed = passes.iter().filter(|x| q.netem_exit(x).is_err()).count();
        assert_eq!(flushed, 12);
        assert_eq!(q.counters().in_flight(), 8);
    }

    #[test]
    fn jitter_within_bounds() {
        let mut p = path(whole_run(Effect::Jitter { lo_ms: 0.0, hi_ms: 6.0 }), no_wifi());
        let mut reordered = false;
        let mut last = 0;
        for i in 0..1000u64 {
            let t = i * 1_000;
            let at = deliver(&mut p, t, 1446)[0].unwrap();
            assert!(at >= t + 500 && at <= t + 6_500);
            reordered |= at < last;
            last = last.max(at);
        }
        assert!(reordered);
    }

    #[test]
    fn ul_feedback_and_tracking() {
        let mut p = path(
            whole_run(Effect::RateLimit {
                rate_mbps: 10.0,
                queue_packets: None,
                queue_bytes: None,
            }),
            WifiLinkModel::default(),
        );
        // fill the DL limiter; the UL must not notice
        for _ in 0..200 {
            p.dl_ingress(0, 1446);
        }
        let ser = serialization_ns(56, 600_000_000) + 8_000;
        assert_eq!(p.ul_send(1_000, 56), 1_000 + ns_to_us_ceil(ser) + 500);

        let mut bytes = 0u64;
        for k in 0..270u64 {
            let t = 2_000_000 + k * 1_000_000 / 270;
            let at = p.ul_send(t, 207);
            assert!(at - t < 600);
            bytes += 207;
        }
        assert!((bytes as f64 * 8.0 / 1e6 - 0.447).abs() < 1e-3);
    }

    #[test]
    fn far_from_ap_overflows_wifi() {
        let mut wifi = WifiLinkModel::default();
        wifi.set_rssi_profile(RssiProfile::constant(-75.0));
        let mut p = path(vec![], wifi);
        // 100 Mbps of video bursts for 5 s
        for f in 0..450u64 {
            for _ in 0..97 {
                deliver(&mut p, f * 11_111, 1446);
            }
        }
        let c = p.counters();
        assert!(c.drops.wifi_overflow as f64 > 0.5 * c.offered as f64, "{c:?}");
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = path(whole_run(Effect::Loss { p: 0.1 }), WifiLinkModel::default());
            (0..2000).map(|i| deliver(&mut p, i * 37, 1446)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
