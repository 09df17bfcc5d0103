use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::Context;
use vrabr::config::ScenarioConfig;
use vrabr::model::session_log_jsonl;
use vrabr::sim::{run_scenario_traced, RunReport};

use crate::{SimulateArgs, UsageError};

/// Environment variable capping the number of concurrent runs.
pub const JOBS_ENV: &str = "VRABR_JOBS";

pub struct Job {
    pub cfg: ScenarioConfig,
    pub dir: PathBuf,
}

fn scenario_text(source: &str) -> anyhow::Result<String> {
    let path = Path::new(source);
    if path.is_file() {
        return fs::read_to_string(path).with_context(|| format!("reading {source}"));
    }
    vrabr::presets::find(source)
        .map(|p| p.config.to_toml_string())
        .ok_or_else(|| UsageError(format!("`{source}` is neither a file nor a preset name")).into())
}

fn parse_set(raw: &str) -> anyhow::Result<(String, String)> {
    let (k, v) = raw
        .split_once('=')
        .ok_or_else(|| UsageError(format!("--set `{raw}`: expected KEY=VALUE")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// Expands sources x controllers x seeds into validated jobs.
pub fn plan(args: &SimulateArgs) -> anyhow::Result<Vec<Job>> {
    let sets = args.set.iter().map(|s| parse_set(s)).collect::<anyhow::Result<Vec<_>>>()?;
    let controllers: Vec<Option<_>> = if args.controller.is_empty() {
        vec![None]
    } else {
        args.controller.iter().copied().map(Some).collect()
    };
    let seeds: Vec<Option<u64>> = if args.seed.is_empty() {
        vec![None]
    } else {
        args.seed.iter().copied().map(Some).collect()
    };
    let mut jobs = Vec::new();
    for source in &args.configs {
        let text = scenario_text(source)?;
        for kind in &controllers {
            for seed in &seeds {
                let mut overrides = sets.clone();
                if let Some(k) = kind {
                    overrides.push(("controller.kind".into(), format!("\"{}\"", k.as_str())));
                }
                if let Some(s) = seed {
                    overrides.push(("seed".into(), s.to_string()));
                }
                let cfg = ScenarioConfig::with_overrides(&text, &overrides).with_context(|| format!("in {source}"))?;
                let parent = args
                    .out
                    .clone()
                    .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
                    .unwrap_or_else(|| PathBuf::from("runs"));
                let dir = parent.join(format!("{}-{}-s{}", cfg.name, cfg.controller.kind.as_str(), cfg.seed));
                jobs.push(Job { cfg, dir });
            }
        }
    }
    let mut dirs: Vec<&PathBuf> = jobs.iter().map(|j| &j.dir).collect();
    dirs.sort();
    if let Some(w) = dirs.windows(2).find(|w| w[0] == w[1]) {
        return Err(UsageError(format!("two runs would share {}", w[0].display())).into());
    }
    Ok(jobs)
}

/// Runs one scenario, writing its artifacts into `dir`.
pub fn run_to_dir(cfg: &ScenarioConfig, dir: &Path) -> anyhow::Result<RunReport> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.resolved"), cfg.to_toml_string())?;
    let mut files = Vec::new();
    for &point in &cfg.capture.points {
        let path = dir.join(point.file_name());
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        files.push((point, BufWriter::new(f)));
    }
    let traces = files.iter_mut().map(|(p, w)| (*p, w as &mut dyn Write)).collect();
    let out = run_scenario_traced(cfg, traces)?;
    for (_, mut w) in files {
        w.flush()?;
    }
    fs::write(dir.join("session.log.jsonl"), session_log_jsonl(&out.log))?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&out.report)? + "\n")?;
    Ok(out.report)
}

fn jobs_limit() -> anyhow::Result<usize> {
    match std::env::var(JOBS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(UsageError(format!("{JOBS_ENV}=`{v}`: expected a positive integer")).into()),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn run(args: SimulateArgs) -> anyhow::Result<ExitCode> {
    let jobs = plan(&args)?;
    let workers = jobs_limit()?.min(jobs.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<anyhow::Result<RunReport>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let r = run_to_dir(&job.cfg, &job.dir);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });

    let mut failed = 0;
    for (job, r) in jobs.iter().zip(results.into_inner().expect("results lock")) {
        match r.expect("every job ran") {
            Ok(rep) => println!(
                "{}  run {}  {:.1} fps  {:.1} Mbps  {} drops",
                job.dir.display(),
                rep.run_id,
                rep.totals.fps_rx,
                rep.totals.mean_bitrate_mbps,
                rep.totals.path_drops_total
            ),
            Err(e) => {
                failed += 1;
                eprintln!("error: {}: {e:#}", job.dir.display());
            }
        }
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
