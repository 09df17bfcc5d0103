//! Acceptance criteria, one PASS/FAIL line each. Runs the `vrabr` binary
//! for every scenario-level check.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use vrabr::config::ScenarioConfig;
use vrabr::metrics::{KalmanFowd, KalmanParams, PacketJitter};
use vrabr::sim::{IntervalStats, RunReport};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vrabr"))
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn simulate(out: &Path, args: &[&str]) -> Result<Duration, String> {
    let start = Instant::now();
    let o = bin()
        .arg("simulate")
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("simulate {args:?}: {}", String::from_utf8_lossy(&o.stderr)));
    }
    Ok(start.elapsed())
}

fn report(dir: &Path) -> Result<RunReport, String> {
    let text = fs::read_to_string(dir.join("report.json")).map_err(|e| format!("{}: {e}", dir.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn limited(r: &RunReport) -> Vec<&IntervalStats> {
    r.intervals.iter().filter(|i| !i.effects.is_empty()).collect()
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

const TBL4_RUNS: [(&str, u64); 10] = [
    ("bandwidth_tbl4", 1),
    ("bandwidth_tbl4", 2),
    ("bandwidth_tbl4", 3),
    ("loss_tbl4", 1),
    ("loss_tbl4", 2),
    ("loss_tbl4", 3),
    ("duplication_tbl4", 1),
    ("duplication_tbl4", 2),
    ("jitter_tbl4", 1),
    ("jitter_tbl4", 2),
];

fn oracle_equivalence(tmp: &Path) -> Outcome {
    let mut slowest = Duration::ZERO;
    let mut frames = 0u64;
    let mut worst_fowd = 0.0f64;
    for (preset, seed) in TBL4_RUNS {
        let seed_s = seed.to_string();
        let took = simulate(
            tmp,
            &[
                preset,
                "--seed",
                &seed_s,
                "--set",
                r#"capture.points=["server_egress","client_ingress"]"#,
            ],
        )?;
        slowest = slowest.max(took);
        check(took < Duration::from_secs(60), || format!("{preset} seed {seed} took {took:?}"))?;
        let dir = tmp.join(format!("{preset}-cbr-s{seed}"));
        let o = bin().arg("validate").arg(&dir).arg("--json").output().map_err(|e| e.to_string())?;
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).map_err(|e| format!("{preset}/{seed}: {e}"))?;
        let tag = format!("{preset} seed {seed}");
        check(o.status.success() && v["pass"] == true, || format!("{tag}: validation failed"))?;
        check(v["capture"] == "client_ingress", || format!("{tag}: wrong capture {}", v["capture"]))?;
        check(
            v["only_in_log"].as_array().is_some_and(Vec::is_empty) && v["only_in_trace"].as_array().is_some_and(Vec::is_empty),
            || format!("{tag}: unmatched frames"),
        )?;
        for m in v["metrics"].as_array().ok_or("metrics missing")? {
            let name = m["metric"].as_str().unwrap_or("?");
            check(m["available"] == true, || format!("{tag}: {name} unavailable"))?;
            let diff = m["max_abs_diff"].as_f64().unwrap_or(f64::INFINITY);
            match name {
                "frame_span" | "packets_lost_interval" => {
                    check(diff == 0.0, || format!("{tag}: {name} differs by {diff}"))?
                }
                "fowd" => {
                    worst_fowd = worst_fowd.max(diff);
                    check(diff < 1e-3, || format!("{tag}: fowd differs by {diff}"))?
                }
                _ => check(m["pass"] == true, || format!("{tag}: {name} differs by {diff}"))?,
            }
        }
        frames += v["frames_matched"].as_u64().unwrap_or(0);
    }
    Ok(format!(
        "10 runs, {frames} frames matched, losses and spans exact, max FOWD diff {worst_fowd:.1e} ms, slowest run {:.1} s",
        slowest.as_secs_f64()
    ))
}

fn peak_throughput(tmp: &Path) -> Outcome {
    // the seed-1 bandwidth run from the oracle check
    let r = report(&tmp.join("bandwidth_tbl4-cbr-s1"))?;
    let lim = limited(&r);
    check(lim.len() == 3, || format!("expected 3 limited intervals, got {}", lim.len()))?;
    let mut got = Vec::new();
    for (iv, target) in lim.iter().zip([100.0, 95.0, 90.0]) {
        let peak = iv.peak_throughput_mean_mbps.ok_or("no peak throughput")?;
        got.push(format!("{peak:.1}"));
        check((peak - target).abs() <= 0.05 * target, || {
            format!("{}-{} s: {peak:.2} Mbps vs {target}", iv.start_s, iv.end_s)
        })?;
    }
    Ok(format!("windowed mean peak {} Mbps for limits 100/95/90", got.join("/")))
}

fn nestvr_steps(tmp: &Path) -> Outcome {
    let dir = tmp.join("steps");
    simulate(&dir, &["capacity", "mobility", "bandwidth_tbl4", "--controller", "nestvr", "--seed", "1,2,3"])?;
    let mut ticks = 0;
    let mut clamped = 0;
    for entry in fs::read_dir(&dir).map_err(|e| e.to_string())? {
        let run = entry.map_err(|e| e.to_string())?.path();
        let r = report(&run)?;
        let cfg = ScenarioConfig::load(run.join("config.resolved")).map_err(|e| e.to_string())?;
        let p = &cfg.controller.nestvr;
        let tag = run.file_name().unwrap().to_string_lossy().into_owned();
        for (i, t) in r.controller_ticks.iter().enumerate() {
            let (prev, beta) = (t.previous_mbps, p.beta_mbps);
            check([prev, prev + beta, prev - beta].contains(&t.proposed_mbps), || {
                format!("{tag} tick {i}: rule moved {prev} -> {}", t.proposed_mbps)
            })?;
            if i > 0 {
                check(t.previous_mbps == r.controller_ticks[i - 1].bitrate_mbps, || {
                    format!("{tag} tick {i}: previous does not chain")
                })?;
            }
            if let Some(bound) = t.capacity_bound_mbps {
                let c = t.peak_throughput_mean.ok_or("bound without capacity estimate")?;
                check(bound == p.capacity_scale * c, || format!("{tag} tick {i}: bound {bound} != m*C"))?;
                check(t.bitrate_mbps <= bound, || {
                    format!("{tag} tick {i}: bitrate {} above m*C = {bound}", t.bitrate_mbps)
                })?;
                if t.proposed_mbps > bound {
                    clamped += 1;
                }
            }
            ticks += 1;
        }
    }
    Ok(format!("{ticks} ticks over 9 NeSt-VR runs, every step 0 or beta, B <= m*C throughout ({clamped} cap clamps)"))
}

fn capacity_ordering(tmp: &Path) -> Outcome {
    let dir = tmp.join("capacity");
    simulate(&dir, &["capacity", "--controller", "cbr,alvr,nestvr"])?;
    let cbr = report(&dir.join("capacity-cbr-s1"))?;
    let alvr = report(&dir.join("capacity-alvr-s1"))?;
    let nest = report(&dir.join("capacity-nestvr-s1"))?;

    let (c, a, n) = (cbr.totals.path_drops_total, alvr.totals.path_drops_total, nest.totals.path_drops_total);
    check(c >= 10 * a.max(1) && c >= 10 * n.max(1), || format!("losses cbr {c} alvr {a} nestvr {n}"))?;
    let per: Vec<u64> = limited(&cbr).iter().map(|i| i.path_drops_total).collect();
    check(per.len() == 3 && per[0] < per[1] && per[1] < per[2], || format!("cbr per-interval losses {per:?}"))?;

    let floor = 0.95 * 90.0;
    check(alvr.totals.fps_rx >= floor && nest.totals.fps_rx >= floor, || {
        format!("abr fps alvr {:.2} nestvr {:.2}", alvr.totals.fps_rx, nest.totals.fps_rx)
    })?;
    let cbr_lim = limited(&cbr);
    let cbr_fps = cbr_lim.iter().map(|i| i.fps_rx).sum::<f64>() / cbr_lim.len() as f64;
    check(cbr_fps < 0.75 * 90.0, || format!("cbr limited fps {cbr_fps:.2}"))?;

    let mut rates = String::new();
    for (x, y) in limited(&nest).iter().zip(limited(&alvr)) {
        write!(rates, " {:.1}>{:.1}", x.mean_bitrate_mbps, y.mean_bitrate_mbps).unwrap();
        check(x.mean_bitrate_mbps > y.mean_bitrate_mbps, || {
            format!("{}-{} s: nestvr {:.2} <= alvr {:.2}", x.start_s, x.end_s, x.mean_bitrate_mbps, y.mean_bitrate_mbps)
        })?;
    }
    Ok(format!(
        "losses cbr {c} vs alvr {a} / nestvr {n}, cbr per interval {per:?}; fps alvr {:.1} nestvr {:.1} cbr-limited {cbr_fps:.1}; NeSt-VR vs ALVR Mbps{rates}",
        alvr.totals.fps_rx, nest.totals.fps_rx
    ))
}

fn mobility_ordering(tmp: &Path) -> Outcome {
    let dir = tmp.join("mobility");
    simulate(&dir, &["mobility", "--controller", "cbr,alvr,nestvr"])?;
    let plateau = |r: &RunReport| -> Result<IntervalStats, String> {
        r.intervals
            .iter()
            .find(|i| i.start_s == 50.0 && i.end_s == 70.0)
            .cloned()
            .ok_or_else(|| "no 50-70 s plateau interval".to_string())
    };
    let cbr = report(&dir.join("mobility-cbr-s1"))?;
    let alvr = report(&dir.join("mobility-alvr-s1"))?;
    let nest = report(&dir.join("mobility-nestvr-s1"))?;
    let cfg = ScenarioConfig::load(dir.join("mobility-nestvr-s1/config.resolved")).map_err(|e| e.to_string())?;
    let (bmin, beta) = (cfg.controller.nestvr.min_mbps, cfg.controller.nestvr.beta_mbps);
    let alvr_min = ScenarioConfig::load(dir.join("mobility-alvr-s1/config.resolved"))
        .map_err(|e| e.to_string())?
        .controller
        .alvr
        .min_mbps;
    let (pc, pa, pn) = (plateau(&cbr)?, plateau(&alvr)?, plateau(&nest)?);

    check(pa.mean_bitrate_mbps <= alvr_min + 2.0 * beta, || format!("alvr plateau {:.2} Mbps", pa.mean_bitrate_mbps))?;
    check(pn.mean_bitrate_mbps <= bmin + 2.0 * beta, || format!("nestvr plateau {:.2} Mbps", pn.mean_bitrate_mbps))?;
    let first = cbr.controller_ticks.first().map(|t| t.bitrate_mbps);
    check(cbr.controller_ticks.iter().all(|t| Some(t.bitrate_mbps) == first), || "cbr bitrate changed".into())?;

    let floor = 0.95 * 90.0;
    check(pa.fps_rx >= floor && pn.fps_rx >= floor, || {
        format!("plateau fps alvr {:.2} nestvr {:.2}", pa.fps_rx, pn.fps_rx)
    })?;
    let before = cbr.intervals.first().map_or(0.0, |i| i.fps_rx);
    check(pc.fps_rx < floor && pc.fps_rx < before, || format!("cbr plateau fps {:.2}", pc.fps_rx))?;
    check(pn.mean_bitrate_mbps >= pa.mean_bitrate_mbps, || {
        format!("plateau nestvr {:.2} < alvr {:.2} Mbps", pn.mean_bitrate_mbps, pa.mean_bitrate_mbps)
    })?;
    Ok(format!(
        "plateau Mbps cbr {:.1} alvr {:.1} nestvr {:.1}; fps cbr {:.1} alvr {:.1} nestvr {:.1}",
        pc.mean_bitrate_mbps, pa.mean_bitrate_mbps, pn.mean_bitrate_mbps, pc.fps_rx, pa.fps_rx, pn.fps_rx
    ))
}

fn rfc3550_jitter() -> Outcome {
    let mut j = PacketJitter::<f64>::default();
    j.update(16.0);
    check(j.value() == 1.0, || format!("single step gave {}", j.value()))?;
    let mut slowest = 0;
    for d in [0.01, 0.5, 1.0, 8.0, 16.0, 100.0] {
        let mut j = PacketJitter::<f64>::default();
        let hit = (1..=100).find(|_| {
            j.update(d);
            j.value() >= 0.99 * d && j.value() <= d
        });
        let n = hit.ok_or_else(|| format!("d = {d}: {} after 100 updates", j.value()))?;
        slowest = slowest.max(n);
    }
    Ok(format!("J(16 ms step) = 1 ms; constant |D| reaches [0.99d, d] within {slowest} updates"))
}

/// Textbook scalar Kalman filter with exponentially forgotten measurement
/// noise, kept separate from the library implementation.
fn kalman_oracle(g: f64, n: usize, k: &KalmanParams) -> Vec<f64> {
    let (mut x, mut p, mut r) = (0.0, k.initial_error, k.initial_measurement_noise);
    (0..n)
        .map(|_| {
            let pp = p + k.state_noise;
            let innov = g - x;
            let gain = pp / (pp + r);
            x += gain * innov;
            p = (1.0 - gain) * pp;
            r = k.forgetting * r + (1.0 - k.forgetting) * innov * innov;
            x
        })
        .collect()
}

fn kalman_fowd() -> Outcome {
    let params = KalmanParams::default();
    check(params.state_noise == 1e-7, || format!("q = {}", params.state_noise))?;
    let mut out = Vec::new();
    for g in [0.05, 0.5, 5.0] {
        let oracle = kalman_oracle(g, 200, &params);
        let mut f = KalmanFowd::<f64>::new(&params);
        let mut settled = None;
        for (i, want) in oracle.iter().enumerate() {
            let got = f.update(g);
            check((got - want).abs() <= 1e-12 * (1.0 + want.abs()), || {
                format!("g = {g}, frame {i}: {got} vs oracle {want}")
            })?;
            if settled.is_none() && (got - g).abs() <= 0.1 * g {
                settled = Some(i + 1);
            }
        }
        check((f.estimate() - g).abs() <= 0.1 * g, || format!("g = {g}: ends at {}", f.estimate()))?;
        let n = settled.ok_or_else(|| format!("g = {g} never within 10%"))?;
        out.push(format!("g={g}: {n} frames"));
    }
    Ok(format!("matches oracle to 1e-12; within 10% after {}", out.join(", ")))
}

fn determinism(tmp: &Path) -> Outcome {
    let names: Vec<&str> = vrabr::presets::all().iter().map(|p| p.name).collect();
    let all_points = r#"capture.points=["server_egress","path_egress","client_ingress"]"#;
    let (a, b) = (tmp.join("det_a"), tmp.join("det_b"));
    let mut args: Vec<&str> = names.clone();
    args.extend(["--set", all_points]);
    simulate(&a, &args)?;
    simulate(&b, &args)?;
    let mut bytes = 0usize;
    for p in vrabr::presets::all() {
        let run = format!("{}-{}-s1", p.name, p.config.controller.kind.as_str());
        for f in ["session.log.jsonl", "trace.server.tsv", "trace.path.tsv", "trace.client.tsv", "report.json"] {
            let x = fs::read(a.join(&run).join(f)).map_err(|e| format!("{run}/{f}: {e}"))?;
            let y = fs::read(b.join(&run).join(f)).map_err(|e| format!("{run}/{f}: {e}"))?;
            check(x == y, || format!("{run}/{f} differs between executions"))?;
            bytes += x.len();
        }
    }
    Ok(format!("{} presets, logs and 3 traces each byte-identical ({} MB compared)", names.len(), bytes >> 20))
}

fn property_suites() -> Outcome {
    const REQUIRED: [&str; 8] = [
        "shards_sum_to_frame",
        "reassembly_completes_once_in_any_order",
        "path_conserves_packets",
        "fifo_departures_ordered_and_rate_bound",
        "path_without_jitter_never_reorders",
        "controllers_stay_in_range",
        "nestvr_steps_by_beta_and_respects_capacity",
        "clean_stationary_stream_has_unit_nfr",
    ];
    // a separate target dir keeps this build off the outer test run's lock
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let target = root().join("target/acceptance");
    let cmd = |extra: &[&str]| {
        let mut c = Command::new(&cargo);
        c.current_dir(root())
            .env("CARGO_TARGET_DIR", &target)
            .args(["test", "-p", "vrabr", "--test", "properties"])
            .args(extra);
        c
    };
    let built = cmd(&["--no-run"]).output().map_err(|e| e.to_string())?;
    check(built.status.success(), || String::from_utf8_lossy(&built.stderr).into_owned())?;
    let start = Instant::now();
    let o = cmd(&[]).output().map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let stdout = String::from_utf8_lossy(&o.stdout);
    check(o.status.success(), || format!("property suite failed:\n{stdout}"))?;
    let passed: Vec<&str> = stdout
        .lines()
        .filter_map(|l| l.strip_prefix("test ")?.strip_suffix(" ... ok"))
        .collect();
    for name in REQUIRED {
        check(passed.contains(&name), || format!("{name} did not run"))?;
    }
    let cases = fs::read_to_string(root().join("crates/core/tests/properties.rs")).map_err(|e| e.to_string())?;
    check(cases.contains("with_cases(1000)"), || "case count below 1000".into())?;
    check(took < Duration::from_secs(300), || format!("took {took:?}"))?;
    Ok(format!("{} suites x 1000 cases passed in {:.1} s", passed.len(), took.as_secs_f64()))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temp dir");
    let t = tmp.path();
    let criteria: [Criterion; 9] = [
        ("metric oracle equivalence", Box::new(|| oracle_equivalence(t))),
        ("peak throughput tracks capacity", Box::new(|| peak_throughput(t))),
        ("NeSt-VR beta steps and m*C bound", Box::new(|| nestvr_steps(t))),
        ("capacity scenario ordering", Box::new(|| capacity_ordering(t))),
        ("mobility scenario ordering", Box::new(|| mobility_ordering(t))),
        ("RFC 3550 jitter", Box::new(rfc3550_jitter)),
        ("Kalman FOWD convergence", Box::new(kalman_fowd)),
        ("determinism", Box::new(|| determinism(t))),
        ("randomized property suites", Box::new(property_suites)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail} [{secs:.1} s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {why} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
