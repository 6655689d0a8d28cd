//! `hytrain`: fit surrogates, optimise a journey, replay it on the exact
//! models, and compare against the grid oracle.
//!
//! Exit codes: 0 success, 2 input error, 3 fit quality, 4 infeasible,
//! 5 solver failure, 6 validation failure.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;

use config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "hytrain", version, about = "Space-domain convex optimisation of a fuel-cell hybrid train")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Solver tolerance; overrides `solver.tol`.
    #[arg(long, global = true, value_name = "X")]
    tol: Option<f64>,
    /// Seed for synthetic efficiency maps.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the motor, fuel-cell and battery surrogates.
    Fit,
    /// Solve the cone program and audit relaxation tightness.
    Optimize,
    /// Replay a solution CSV through the exact models.
    Validate {
        #[arg(value_name = "SOLUTION")]
        solution: PathBuf,
    },
    /// Solve convex and DP on a small instance and report the gap.
    Compare,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Optimize => "optimize",
            Command::Validate { .. } => "validate",
            Command::Compare => "compare",
        }
    }
}

/// Bad config, missing file or malformed input.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

/// A run that completed but failed its verdict.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl std::error::Error for Failure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use hytrain::Error as E;
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.code;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::FitQuality { .. } => 3,
                E::Infeasible(_) => 4,
                E::SpeedCollapse { .. } => 6,
                _ => 2,
            };
        }
    }
    2
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    exit_code: u8,
    wall_time_s: f64,
    finished_unix_s: u64,
    version: &'a str,
    artifacts: Vec<String>,
}

fn run(cli: &Cli) -> anyhow::Result<(RunConfig, commands::Written)> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| InputError("--config PATH is required".into()))?;
    let ov = Overrides { out: cli.out.clone(), tol: cli.tol, seed: cli.seed };
    let cfg = RunConfig::load(path, &ov)?;
    let written = match &cli.command {
        Command::Fit => commands::fit_cmd(&cfg),
        Command::Optimize => commands::optimize_cmd(&cfg),
        Command::Validate { solution } => commands::validate_cmd(&cfg, solution),
        Command::Compare => commands::compare_cmd(&cfg),
    };
    written.map(|w| (cfg, w))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let result = run(&cli);
    let code = match &result {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(e)
        }
    };
    let out = match &result {
        Ok((cfg, _)) => cfg.out.clone(),
        Err(_) => cli.out.clone(),
    };
    if let Some(dir) = out.filter(|d| d.is_dir()) {
        let meta = Meta {
            command: cli.command.name(),
            exit_code: code,
            wall_time_s: start.elapsed().as_secs_f64(),
            finished_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            version: env!("CARGO_PKG_VERSION"),
            artifacts: result
                .as_ref()
                .map(|(_, w)| w.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect())
                .unwrap_or_default(),
        };
        let path = dir.join(format!("{}.meta.json", meta.command));
        if let Ok(text) = serde_json::to_string_pretty(&meta) {
            let _ = std::fs::write(path, text + "\n");
        }
    }
    if let Ok((_, written)) = &result {
        for p in written {
            println!("wrote {}", p.display());
        }
    }
    ExitCode::from(code)
}
