use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{secs_to_micros, Micros};

/// One emulated impairment, netem style.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Effect {
    RateLimit {
        rate_mbps: f64,
        /// Tail-drop limit in packets; the path default applies when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        queue_packets: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        queue_bytes: Option<u64>,
    },
    Loss {
        p: f64,
    },
    Duplicate {
        p: f64,
    },
    Jitter {
        lo_ms: f64,
        hi_ms: f64,
    },
}

impl Effect {
    fn kind(&self) -> &'static str {
        match self {
            Effect::RateLimit { .. } => "rate_limit",
            Effect::Loss { .. } => "loss",
            Effect::Duplicate { .. } => "duplicate",
            Effect::Jitter { .. } => "jitter",
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Effect::RateLimit { rate_mbps, .. } => format!("rate limit {rate_mbps} Mbps"),
            Effect::Loss { p } => format!("loss {}%", p * 100.0),
            Effect::Duplicate { p } => format!("duplicate {}%", p * 100.0),
            Effect::Jitter { lo_ms, hi_ms } => format!("jitter {lo_ms}-{hi_ms} ms"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedEffect {
    pub start_s: f64,
    pub end_s: f64,
    pub effect: Effect,
}

impl TimedEffect {
    pub fn start_us(&self) -> Micros {
        secs_to_micros(self.start_s)
    }

    pub fn end_us(&self) -> Micros {
        secs_to_micros(self.end_s)
    }

    fn active_at(&self, t: Micros) -> bool {
        (self.start_us()..self.end_us()).contains(&t)
    }
}

/// Effects in force at one instant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActiveEffects {
    pub rate_limit: Option<RateLimit>,
    pub loss: f64,
    pub duplicate: f64,
    pub jitter: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateLimit {
    pub rate_mbps: f64,
    pub queue_packets: Option<usize>,
    pub queue_bytes: Option<u64>,
}

/// Validates a list of effects: well-formed parameters and no two effects of
/// the same kind overlapping in time.
pub fn validate_effects(effects: &[TimedEffect], field: &str) -> Result<()> {
    for (i, e) in effects.iter().enumerate() {
        let at = |name: &str| format!("{field}[{i}].{name}");
        if !(e.start_s >= 0.0 && e.end_s > e.start_s) {
            return Err(Error::config(at("end_s"), "interval must satisfy 0 <= start_s < end_s"));
        }
        match e.effect {
            Effect::RateLimit {
                rate_mbps,
                queue_packets,
                queue_bytes,
            } => {
                if !(rate_mbps.is_finite() && rate_mbps > 0.0) {
                    return Err(Error::config(at("effect.rate_mbps"), "must be positive"));
                }
                if queue_packets == Some(0) || queue_bytes == Some(0) {
                    return Err(Error::config(at("effect.queue_packets"), "queue limits must be positive"));
                }
            }
            Effect::Loss { p } | Effect::Duplicate { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::config(at("effect.p"), format!("probability must lie in [0, 1], got {p}")));
                }
            }
            Effect::Jitter { lo_ms, hi_ms } => {
                if !(lo_ms >= 0.0 && hi_ms >= lo_ms) {
                    return Err(Error::config(at("effect.hi_ms"), "jitter needs 0 <= lo_ms <= hi_ms"));
                }
            }
        }
    }
    for (i, a) in effects.iter().enumerate() {
        for b in &effects[i + 1..] {
            if a.effect.kind() == b.effect.kind() && a.start_s < b.end_s && b.start_s < a.end_s {
                return Err(Error::config(
                    format!("{field}[{i}]"),
                    format!("overlapping `{}` intervals", a.effect.kind()),
                ));
            }
        }
    }
    Ok(())
}

/// Effects active at `t` (intervals are half-open).
pub fn active_effects(effects: &[TimedEffect], t: Micros) -> ActiveEffects {
    let mut out = ActiveEffects::default();
    for e in effects.iter().filter(|e| e.active_at(t)) {
        match e.effect {
            Effect::RateLimit {
                rate_mbps,
                queue_packets,
                queue_bytes,
            } => {
                out.rate_limit = Some(RateLimit {
                    rate_mbps,
                    queue_packets,
                    queue_bytes,
                })
            }
            Effect::Loss { p } => out.loss = p,
            Effect::Duplicate { p } => out.duplicate = p,
            Effect::Jitter { lo_ms, hi_ms } => out.jitter = Some((lo_ms, hi_ms)),
        }
    }
    out
}

/// Sorted, de-duplicated instants at which the active set may change.
pub fn effect_boundaries(effects: &[TimedEffect]) -> Vec<Micros> {
    let mut b: Vec<Micros> = effects.iter().flat_map(|e| [e.start_us(), e.end_us()]).collect();
    b.sort_unstable();
    b.dedup();
    b
}
