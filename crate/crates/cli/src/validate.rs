use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use vrabr::config::ScenarioConfig;
use vrabr::metrics::MetricsConfig;
use vrabr::model::parse_session_log;
use vrabr::sim::RunReport;
use vrabr::trace::{
    compare, metrics_from_trace, parse_trace_with, CapturePoint, ColumnMap, Direction, ParsedTrace, Tolerances,
};

use crate::{UsageError, ValidateArgs};

/// Session log and trace paths named on the command line, or found in a run
/// directory.
fn inputs(paths: &[PathBuf]) -> anyhow::Result<(PathBuf, Vec<PathBuf>)> {
    if let [dir] = paths {
        if dir.is_dir() {
            let traces: Vec<PathBuf> = CapturePoint::ALL
                .iter()
                .map(|p| dir.join(p.file_name()))
                .filter(|p| p.is_file())
                .collect();
            if traces.is_empty() {
                return Err(UsageError(format!("{} holds no trace files", dir.display())).into());
            }
            return Ok((dir.join("session.log.jsonl"), traces));
        }
    }
    match paths {
        [log, traces @ ..] if !traces.is_empty() => Ok((log.clone(), traces.to_vec())),
        _ => Err(UsageError("expected a run directory, or a session log followed by traces".into()).into()),
    }
}

fn column_map(raw: &[String]) -> anyhow::Result<ColumnMap> {
    let mut map = HashMap::new();
    for r in raw {
        let (k, v) = r
            .split_once('=')
            .ok_or_else(|| UsageError(format!("--column `{r}`: expected NAME=HEADER")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(ColumnMap(map))
}

/// Downstream-most capture wins; unlabelled traces rank last.
fn rank(t: &ParsedTrace) -> u8 {
    match t.meta.capture {
        Some(CapturePoint::ClientIngress) => 3,
        Some(CapturePoint::PathEgress) => 2,
        Some(CapturePoint::ServerEgress) => 1,
        None => 0,
    }
}

pub fn run(args: ValidateArgs) -> anyhow::Result<ExitCode> {
    let (log_path, trace_paths) = inputs(&args.paths)?;
    let columns = column_map(&args.columns)?;
    let log_text = fs::read_to_string(&log_path).with_context(|| format!("reading {}", log_path.display()))?;
    let log = parse_session_log(&log_text).with_context(|| log_path.display().to_string())?;

    let mut traces = Vec::new();
    for p in &trace_paths {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let t = parse_trace_with(&text, &columns).with_context(|| p.display().to_string())?;
        for w in &t.warnings {
            eprintln!("warning: {}: {w}", p.display());
        }
        traces.push(t);
    }

    let run_dir = log_path.parent().unwrap_or(Path::new("."));
    let run_id = match args.run_id {
        Some(id) => Some(id),
        None => fs::read_to_string(run_dir.join("report.json"))
            .ok()
            .and_then(|t| serde_json::from_str::<RunReport>(&t).ok())
            .map(|r| r.run_id),
    };
    let metrics_cfg = match fs::read_to_string(run_dir.join("config.resolved")) {
        Ok(text) => ScenarioConfig::from_toml_str(&text).context("config.resolved")?.metrics,
        Err(_) => MetricsConfig::default(),
    };

    let dl = traces
        .iter()
        .enumerate()
        .max_by_key(|(i, t)| (rank(t), std::cmp::Reverse(*i)))
        .map(|(_, t)| t)
        .expect("at least one trace");
    let ul = traces
        .iter()
        .filter(|t| t.rows.iter().any(|r| r.dir == Direction::Ul))
        .min_by_key(|t| rank(t));
    let tm = metrics_from_trace(dl, ul, &metrics_cfg);
    let report = compare(&log, run_id.as_deref(), &tm, &Tolerances::default())?;

    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.render_text());
    }
    Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
