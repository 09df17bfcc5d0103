//! Built-in experiment scenarios.

use crate::abr::ControllerKind;
use crate::config::ScenarioConfig;
use crate::path::{Effect, RssiProfile, TimedEffect};

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub config: ScenarioConfig,
}

fn three_intervals(starts: [f64; 3], len: f64, effects: [Effect; 3]) -> Vec<TimedEffect> {
    starts
        .into_iter()
        .zip(effects)
        .map(|(start_s, effect)| TimedEffect {
            start_s,
            end_s: start_s + len,
            effect,
        })
        .collect()
}

fn rate(mbps: f64) -> Effect {
    Effect::RateLimit {
        rate_mbps: mbps,
        queue_packets: None,
        queue_bytes: None,
    }
}

/// 70 s at constant 100 Mbps with effects in [10,20), [30,40) and [50,60).
fn short_run(name: &str, effects: [Effect; 3]) -> ScenarioConfig {
    let mut c = ScenarioConfig {
        name: name.into(),
        duration_s: 70.0,
        ..Default::default()
    };
    c.controller.kind = ControllerKind::Cbr;
    c.controller.cbr.bitrate_mbps = 100.0;
    c.path.effects = three_intervals([10.0, 30.0, 50.0], 10.0, effects);
    c
}

fn capacity() -> ScenarioConfig {
    let mut c = ScenarioConfig {
        name: "capacity".into(),
        duration_s: 120.0,
        ..Default::default()
    };
    c.controller.kind = ControllerKind::Nestvr;
    c.path.effects = three_intervals([20.0, 60.0, 100.0], 20.0, [rate(100.0), rate(95.0), rate(90.0)]);
    c
}

fn mobility() -> ScenarioConfig {
    let mut c = ScenarioConfig {
        name: "mobility".into(),
        duration_s: 120.0,
        ..Default::default()
    };
    c.controller.kind = ControllerKind::Nestvr;
    c.wifi.rssi = RssiProfile::trapezoid(-40.0, -75.0, 20.0, 30.0, 20.0);
    c.report.intervals = vec![(0.0, 20.0), (20.0, 50.0), (50.0, 70.0), (70.0, 100.0), (100.0, 120.0)];
    c
}

pub fn all() -> Vec<Preset> {
    vec![
        Preset {
            name: "bandwidth_tbl4",
            description: "70 s, CBR 100 Mbps, rate limits 100/95/90 Mbps at 10-20/30-40/50-60 s",
            config: short_run("bandwidth_tbl4", [rate(100.0), rate(95.0), rate(90.0)]),
        },
        Preset {
            name: "loss_tbl4",
            description: "70 s, CBR 100 Mbps, random loss 0.5/1/2 % at 10-20/30-40/50-60 s",
            config: short_run(
                "loss_tbl4",
                [Effect::Loss { p: 0.005 }, Effect::Loss { p: 0.01 }, Effect::Loss { p: 0.02 }],
            ),
        },
        Preset {
            name: "duplication_tbl4",
            description: "70 s, CBR 100 Mbps, duplication 0.5/1/2 % at 10-20/30-40/50-60 s",
            config: short_run(
                "duplication_tbl4",
                [
                    Effect::Duplicate { p: 0.005 },
                    Effect::Duplicate { p: 0.01 },
                    Effect::Duplicate { p: 0.02 },
                ],
            ),
        },
        Preset {
            name: "jitter_tbl4",
            description: "70 s, CBR 100 Mbps, uniform jitter 0-6/0-10/0-20 ms at 10-20/30-40/50-60 s",
            config: short_run(
                "jitter_tbl4",
                [
                    Effect::Jitter { lo_ms: 0.0, hi_ms: 6.0 },
                    Effect::Jitter { lo_ms: 0.0, hi_ms: 10.0 },
                    Effect::Jitter { lo_ms: 0.0, hi_ms: 20.0 },
                ],
            ),
        },
        Preset {
            name: "capacity",
            description: "120 s, rate limits 100/95/90 Mbps at 20-40/60-80/100-120 s",
            config: capacity(),
        },
        Preset {
            name: "mobility",
            description: "120 s, RSSI -40 -> -75 -> -40 dBm (ramps 20-50 and 70-100 s, plateau 50-70 s)",
            config: mobility(),
        },
    ]
}

pub fn find(name: &str) -> Option<Preset> {
    all().into_iter().find(|p| p.name == name)
}
