//! End-to-end checks of the `vrabr` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vrabr::sim::RunReport;

fn vrabr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrabr")).args(args).output().expect("spawn vrabr")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn simulate(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    vrabr(&args)
}

fn report(dir: &Path) -> RunReport {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn presets_listing() {
    let o = vrabr(&["presets"]);
    assert!(o.status.success());
    let s = text(&o.stdout);
    let line = |name: &str| s.lines().find(|l| l.starts_with(name)).unwrap().to_string();
    assert!(line("bandwidth_tbl4").contains("100/95/90 Mbps"));
    assert!(line("jitter_tbl4").contains("0-6/0-10/0-20 ms"));
    assert!(line("mobility").contains("-40 -> -75 -> -40 dBm"));
    assert_eq!(s.lines().count(), 6);
}

#[test]
fn shipped_preset_files_match_builtins() {
    for p in vrabr::presets::all() {
        let path = repo_root().join("presets").join(format!("{}.cfg", p.name));
        let file = vrabr::config::ScenarioConfig::load(&path).unwrap();
        assert_eq!(file, p.config, "{} drifted from the built-in preset", path.display());
    }
}

#[test]
fn config_errors_exit_2_and_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let o = simulate(tmp.path(), &["bandwidth_tbl4", "--set", "controller.nestvr.beta_mbps=-1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("controller.nestvr.beta_mbps"), "{}", text(&o.stderr));

    let bad = tmp.path().join("bad.cfg");
    fs::write(&bad, "duration_s = 5.0\nbogus_key = 1\n").unwrap();
    let o = simulate(tmp.path(), &[bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("bogus_key"), "{}", text(&o.stderr));

    let o = simulate(tmp.path(), &["no_such_preset"]);
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_vrabr"))
        .args(["simulate", "loss_tbl4", "--out", tmp.path().to_str().unwrap()])
        .env("VRABR_JOBS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(fs::read_dir(tmp.path()).unwrap().all(|e| e.unwrap().path() == bad));
}

#[test]
fn simulate_preset_file_writes_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = repo_root().join("presets/bandwidth_tbl4.cfg");
    let o = simulate(
        tmp.path(),
        &[cfg.to_str().unwrap(), "--controller", "nestvr", "--set", "duration_s=15"],
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    let dir = tmp.path().join("bandwidth_tbl4-nestvr-s1");
    for f in ["config.resolved", "session.log.jsonl", "report.json", "trace.server.tsv", "trace.path.tsv"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let r = report(&dir);
    assert_eq!(r.controller, "nestvr");
    assert_eq!(r.duration_s, 15.0);
    let resolved = vrabr::config::ScenarioConfig::load(dir.join("config.resolved")).unwrap();
    assert_eq!(resolved.run_id(), r.run_id);
    let beta = resolved.controller.nestvr.beta_mbps;
    for w in r.controller_ticks.windows(2) {
        assert!((w[1].bitrate_mbps - w[0].bitrate_mbps).abs() <= beta + 1e-9);
    }
}

#[test]
fn seed_override_keeps_schedule() {
    let tmp = tempfile::tempdir().unwrap();
    let o = simulate(
        tmp.path(),
        &["jitter_tbl4", "--seed", "3,4", "--set", "duration_s=12", "--controller", "alvr"],
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    let a = report(&tmp.path().join("jitter_tbl4-alvr-s3"));
    let b = report(&tmp.path().join("jitter_tbl4-alvr-s4"));
    assert_eq!(a.frames.encoded, b.frames.encoded);
    assert_eq!(a.controller_ticks.len(), b.controller_ticks.len());
    assert_ne!(a.run_id, b.run_id);
    let la = fs::read(tmp.path().join("jitter_tbl4-alvr-s3/session.log.jsonl")).unwrap();
    let lb = fs::read(tmp.path().join("jitter_tbl4-alvr-s4/session.log.jsonl")).unwrap();
    assert_ne!(la, lb);
}

fn traced_run(tmp: &Path) -> PathBuf {
    let o = simulate(
        tmp,
        &[
            "loss_tbl4",
            "--set",
            "duration_s=15",
            "--set",
            r#"capture.points=["server_egress","client_ingress"]"#,
        ],
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    tmp.join("loss_tbl4-cbr-s1")
}

#[test]
fn validate_pass_perturbed_and_missing_ul() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = traced_run(tmp.path());

    let o = vrabr(&["validate", dir.to_str().unwrap()]);
    let out = text(&o.stdout);
    assert!(o.status.success(), "{out}");
    assert!(out.contains("overall       PASS"));

    // client trace alone has no UL rows
    let log = dir.join("session.log.jsonl");
    let client = dir.join("trace.client.tsv");
    let o = vrabr(&["validate", log.to_str().unwrap(), client.to_str().unwrap()]);
    let out = text(&o.stdout);
    assert!(o.status.success(), "{out}");
    let rtt = out.lines().find(|l| l.starts_with("vf_rtt ")).unwrap();
    assert!(rtt.ends_with("N/A"), "{rtt}");

    // shift one frame's span in the log
    let perturbed = tmp.path().join("perturbed.jsonl");
    let mut lines: Vec<String> = fs::read_to_string(&log).unwrap().lines().map(str::to_string).collect();
    let mut e: serde_json::Value = serde_json::from_str(&lines[100]).unwrap();
    e["frame_span"] = serde_json::json!(e["frame_span"].as_f64().unwrap() + 0.5);
    lines[100] = e.to_string();
    fs::write(&perturbed, lines.join("\n")).unwrap();
    let o = vrabr(&[
        "validate",
        perturbed.to_str().unwrap(),
        client.to_str().unwrap(),
        "--run-id",
        &report(&dir).run_id,
    ]);
    let out = text(&o.stdout);
    assert_eq!(o.status.code(), Some(1), "{out}");
    let span = out.lines().find(|l| l.starts_with("frame_span")).unwrap();
    assert!(span.ends_with("FAIL"), "{span}");

    let o = vrabr(&["validate", log.to_str().unwrap(), client.to_str().unwrap(), "--run-id", "0000000000000000"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("mismatch"), "{}", text(&o.stderr));

    let o = vrabr(&["validate", dir.to_str().unwrap(), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["capture"], "client_ingress");
}

#[test]
fn compare_runs_and_skips_incomplete_dirs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = traced_run(tmp.path());
    let empty = tmp.path().join("unfinished");
    fs::create_dir(&empty).unwrap();
    let csv = tmp.path().join("cmp.csv");
    let o = vrabr(&[
        "compare",
        dir.to_str().unwrap(),
        empty.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stderr).contains("skipping"));
    assert!(text(&o.stdout).contains("loss_tbl4-cbr-s1"));

    let mut rd = csv::Reader::from_path(&csv).unwrap();
    assert_eq!(rd.headers().unwrap(), vec!["t", "run", "metric", "value"]);
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    let metric = |m: &str| rows.iter().filter(|r| &r[2] == m).count();
    assert!(metric("bitrate_mbps") > 0);
    assert!(metric("fps_rx") > 1000);
    assert!(metric("cumulative_losses") > 1000);
    assert_eq!(metric("interval_mean_bitrate_mbps"), report(&dir).intervals.len());
    assert!(rows.iter().all(|r| &r[1] == "loss_tbl4-cbr-s1"));
    // steady windowed delivery rate of a clean stretch sits at the frame rate
    let fps: Vec<f64> = rows
        .iter()
        .filter(|r| &r[2] == "fps_rx" && r[0].parse::<f64>().unwrap() < 9.0 && r[0].parse::<f64>().unwrap() > 3.0)
        .map(|r| r[3].parse().unwrap())
        .collect();
    assert!(fps.iter().all(|f| (f - 90.0).abs() < 1.0), "{fps:?}");

    let o = vrabr(&["compare", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
