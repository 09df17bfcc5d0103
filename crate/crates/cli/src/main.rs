//! `vrabr` command-line front end.

mod compare;
mod simulate;
mod validate;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vrabr::abr::ControllerKind;

#[derive(Parser)]
#[command(name = "vrabr", version, about = "VR streaming bitrate-adaptation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios and write one directory of artifacts per run.
    Simulate(SimulateArgs),
    /// Merge finished runs into a long-format CSV and a summary table.
    Compare(CompareArgs),
    /// Check a session log against metrics recomputed from packet traces.
    Validate(ValidateArgs),
    /// List the built-in scenarios.
    Presets(PresetsArgs),
}

#[derive(clap::Args)]
pub struct SimulateArgs {
    /// Preset names or scenario files (TOML).
    #[arg(required = true, value_name = "CONFIG")]
    pub configs: Vec<String>,
    /// Controller(s) to run; comma-separated or repeated.
    #[arg(long, value_delimiter = ',')]
    pub controller: Vec<ControllerKind>,
    /// Seed(s) to run; comma-separated or repeated.
    #[arg(long, value_delimiter = ',')]
    pub seed: Vec<u64>,
    /// Override any field by dotted path, e.g. `controller.nestvr.beta_mbps=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Parent directory for run directories [default: output.dir or `runs`].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct CompareArgs {
    /// Run directories.
    #[arg(required = true)]
    pub dirs: Vec<PathBuf>,
    /// Write the CSV here instead of stdout; the summary then goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Frames per sliding window for the delivery-rate series.
    #[arg(long, default_value_t = 128)]
    pub window: usize,
}

#[derive(clap::Args)]
pub struct ValidateArgs {
    /// A run directory, or a session log followed by one or more traces.
    #[arg(required = true, value_name = "PATH")]
    pub paths: Vec<PathBuf>,
    /// Expected run id [default: from report.json beside the log].
    #[arg(long)]
    pub run_id: Option<String>,
    /// Rename trace columns, `canonical=external`; repeatable.
    #[arg(long = "column", value_name = "NAME=HEADER")]
    pub columns: Vec<String>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(clap::Args)]
pub struct PresetsArgs {
    /// Print the full configuration of one preset.
    #[arg(long, value_name = "NAME")]
    pub show: Option<String>,
    /// Write every preset as `<name>.cfg` into this directory.
    #[arg(long, value_name = "DIR")]
    pub write: Option<PathBuf>,
}

/// A problem with user-supplied configuration or arguments (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    let config = err.chain().any(|e| {
        e.downcast_ref::<UsageError>().is_some() || e.downcast_ref::<vrabr::Error>().is_some_and(vrabr::Error::is_config)
    });
    if config {
        2
    } else {
        1
    }
}

fn presets(args: PresetsArgs) -> anyhow::Result<ExitCode> {
    if let Some(name) = args.show {
        let p = vrabr::presets::find(&name).ok_or_else(|| UsageError(format!("unknown preset `{name}`")))?;
        print!("{}", p.config.to_toml_string());
        return Ok(ExitCode::SUCCESS);
    }
    let all = vrabr::presets::all();
    if let Some(dir) = args.write {
        std::fs::create_dir_all(&dir)?;
        for p in &all {
            let text = format!("# {}\n{}", p.description, p.config.to_toml_string());
            std::fs::write(dir.join(format!("{}.cfg", p.name)), text)?;
        }
    }
    let width = all.iter().map(|p| p.name.len()).max().unwrap_or(0);
    for p in &all {
        println!("{:width$}  {}", p.name, p.description);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Compare(a) => compare::run(a),
        Command::Validate(a) => validate::run(a),
        Command::Presets(a) => presets(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
