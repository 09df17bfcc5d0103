use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use anyhow::Context;
use vrabr::model::{parse_session_log, SessionLogEntry};
use vrabr::sim::RunReport;
use vrabr::trace::Quantiles;

use crate::{CompareArgs, UsageError};

struct Run {
    label: String,
    report: RunReport,
    log: Vec<SessionLogEntry>,
}

fn load(dir: &Path) -> Result<Run, String> {
    let report_path = dir.join("report.json");
    let text = fs::read_to_string(&report_path).map_err(|e| format!("{}: {e}", report_path.display()))?;
    let report: RunReport = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", report_path.display()))?;
    let log_path = dir.join("session.log.jsonl");
    let log = match fs::read_to_string(&log_path) {
        Ok(t) => parse_session_log(&t).map_err(|e| format!("{}: {e}", log_path.display()))?,
        Err(e) => {
            eprintln!("warning: {}: {e}; per-frame series omitted", log_path.display());
            Vec::new()
        }
    };
    let label = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(Run { label, report, log })
}

/// Long-format rows `(t, run, metric, value)`; run-level rows have empty `t`.
fn rows(run: &Run, window: usize) -> Vec<(Option<f64>, &'static str, f64)> {
    let mut out = Vec::new();
    for t in &run.report.controller_ticks {
        out.push((Some(t.t_s), "bitrate_mbps", t.bitrate_mbps));
    }
    let mut lost = 0u64;
    for (i, e) in run.log.iter().enumerate() {
        let first = &run.log[(i + 1).saturating_sub(window)];
        let n = i + 1 - (i + 1).saturating_sub(window);
        if n >= 2 && e.t_s > first.t_s {
            out.push((Some(e.t_s), "fps_rx", (n - 1) as f64 / (e.t_s - first.t_s)));
        }
        if let Some(r) = e.vf_rtt {
            out.push((Some(e.t_s), "vf_rtt_ms", r));
        }
        lost += e.packets_lost_interval.unwrap_or(0);
        out.push((Some(e.t_s), "cumulative_losses", lost as f64));
    }
    for iv in &run.report.intervals {
        let t = Some(iv.start_s);
        out.push((t, "interval_mean_bitrate_mbps", iv.mean_bitrate_mbps));
        out.push((t, "interval_fps_rx", iv.fps_rx));
        out.push((t, "interval_path_drops", iv.path_drops_total as f64));
        out.push((t, "interval_packets_lost", iv.packets_lost_logged as f64));
        if let Some(v) = iv.vf_rtt_mean_ms {
            out.push((t, "interval_vf_rtt_mean_ms", v));
        }
        if let Some(v) = iv.peak_throughput_mean_mbps {
            out.push((t, "interval_peak_throughput_mbps", v));
        }
    }
    if let Some(q) = rtt_quantiles(run) {
        for (name, v) in [
            ("vf_rtt_p5_ms", q.p5),
            ("vf_rtt_p25_ms", q.p25),
            ("vf_rtt_p50_ms", q.p50),
            ("vf_rtt_p75_ms", q.p75),
            ("vf_rtt_p95_ms", q.p95),
        ] {
            out.push((None, name, v));
        }
    }
    out.push((None, "total_path_drops", run.report.totals.path_drops_total as f64));
    out.push((None, "total_fps_rx", run.report.totals.fps_rx));
    out
}

fn rtt_quantiles(run: &Run) -> Option<Quantiles> {
    let mut v: Vec<f64> = run.log.iter().filter_map(|e| e.vf_rtt).collect();
    v.sort_by(f64::total_cmp);
    Quantiles::of(&v)
}

fn write_csv(runs: &[Run], window: usize, out: impl Write) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "run", "metric", "value"])?;
    for run in runs {
        for (t, metric, value) in rows(run, window) {
            let t = t.map(|t| t.to_string()).unwrap_or_default();
            w.write_record([t.as_str(), run.label.as_str(), metric, value.to_string().as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.1}"))
}

fn summary(runs: &[Run]) -> String {
    let width = runs.iter().map(|r| r.label.len()).max().unwrap_or(3).max(3);
    let mut s = format!(
        "{:width$}  {:>13}  {:>8}  {:>7}  {:>8}  {:>8}  effects\n",
        "run", "interval_s", "Mbps", "fps", "drops", "rtt_ms"
    );
    for run in runs {
        for iv in run.report.intervals.iter().chain(std::iter::once(&run.report.totals)) {
            s += &format!(
                "{:width$}  {:>13}  {:>8.1}  {:>7.1}  {:>8}  {:>8}  {}\n",
                run.label,
                format!("{}-{}", iv.start_s, iv.end_s),
                iv.mean_bitrate_mbps,
                iv.fps_rx,
                iv.path_drops_total,
                opt(iv.vf_rtt_mean_ms),
                if iv.effects.is_empty() { "-".into() } else { iv.effects.join(", ") },
            );
        }
    }
    s += "\nVF-RTT (ms)\n";
    for run in runs {
        match rtt_quantiles(run) {
            Some(q) => {
                s += &format!(
                    "{:width$}  p5 {:.2}  p50 {:.2}  p95 {:.2}\n",
                    run.label, q.p5, q.p50, q.p95
                )
            }
            None => s += &format!("{:width$}  n/a\n", run.label),
        }
    }
    s
}

pub fn run(args: CompareArgs) -> anyhow::Result<ExitCode> {
    if args.window < 2 {
        return Err(UsageError("--window must be at least 2".into()).into());
    }
    let mut runs = Vec::new();
    for dir in &args.dirs {
        match load(dir) {
            Ok(r) => runs.push(r),
            Err(e) => eprintln!("warning: skipping {}: {e}", dir.display()),
        }
    }
    if runs.is_empty() {
        anyhow::bail!("no completed run directories among the arguments");
    }
    match &args.out {
        Some(path) => {
            let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(&runs, args.window, std::io::BufWriter::new(f))?;
            print!("{}", summary(&runs));
        }
        None => {
            write_csv(&runs, args.window, std::io::stdout().lock())?;
            eprint!("{}", summary(&runs));
        }
    }
    Ok(ExitCode::SUCCESS)
}
