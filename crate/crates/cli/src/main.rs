//! Experiment runner for the mollified-markets laboratory.
//!
//! `mollify-markets <subcommand> --config <path> [--set k=v]... [--seed N]
//! [--out DIR]` — parses a flat key-value configuration, validates every
//! precondition up front, runs the requested experiment family, and writes
//! CSV reports plus a manifest that reproduces the run.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

mod config;
mod report;
mod runner;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use config::{build, RawConfig};
use runner::RunError;

#[derive(Parser, Debug)]
#[command(
    name = "mollify-markets",
    version,
    about = "Smoothed-market experiment runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration file (flat `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set metrics.n_paths=64`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for reports (created if missing).
    #[arg(long, global = true, default_value = "reports")]
    out: PathBuf,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Export raw simulated paths (paths.csv).
    Simulate,
    /// Coefficient and price closeness across bandwidths (closeness.csv).
    Closeness,
    /// Extrapolation error of the smoothed volatility (forecast.csv).
    Forecast,
    /// Replication and incomplete-hedging errors (hedge.csv).
    Hedge,
    /// Two-sample indistinguishability power curve (power_curve.csv).
    Distinguish,
    /// Every family in sequence.
    All,
}

impl Command {
    fn label(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Closeness => "closeness",
            Command::Forecast => "forecast",
            Command::Hedge => "hedge",
            Command::Distinguish => "distinguish",
            Command::All => "all",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.kind() == ErrorKind::DisplayHelp || e.kind() == ErrorKind::DisplayVersion => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            // Usage problems (unknown subcommand, bad flags) are
            // configuration errors by contract.
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };

    if let Ok(threads) = std::env::var("MOLLIFY_MARKETS_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(MainError::Config(messages)) => {
            for m in messages {
                eprintln!("config error: {m}");
            }
            ExitCode::from(1)
        }
        Err(MainError::Runtime(message)) => {
            eprintln!("runtime error: {message}");
            ExitCode::from(2)
        }
    }
}

enum MainError {
    Config(Vec<String>),
    Runtime(String),
}

fn run(cli: &Cli) -> Result<(), MainError> {
    let start = Instant::now();
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| MainError::Config(vec!["--config <path> is required".into()]))?;
    let text = std::fs::read_to_string(config_path).map_err(|e| {
        MainError::Config(vec![format!("cannot read {}: {e}", config_path.display())])
    })?;
    let mut raw = RawConfig::parse(&text).map_err(|e| MainError::Config(vec![e]))?;
    for pair in &cli.overrides {
        let Some((k, v)) = pair.split_once('=') else {
            return Err(MainError::Config(vec![format!(
                "--set expects KEY=VALUE, got `{pair}`"
            )]));
        };
        raw.set(k, v);
    }
    if let Some(seed) = cli.seed {
        raw.set("seed", &seed.to_string());
    }

    let cfg = build(&mut raw)
        .map_err(|vs| MainError::Config(vs.iter().map(|v| v.to_string()).collect()))?;

    std::fs::create_dir_all(&cli.out)
        .map_err(|e| MainError::Runtime(format!("cannot create {}: {e}", cli.out.display())))?;

    let families: &[Command] = match cli.command {
        Command::All => &[
            Command::Simulate,
            Command::Closeness,
            Command::Forecast,
            Command::Hedge,
            Command::Distinguish,
        ],
        Command::Simulate => &[Command::Simulate],
        Command::Closeness => &[Command::Closeness],
        Command::Forecast => &[Command::Forecast],
        Command::Hedge => &[Command::Hedge],
        Command::Distinguish => &[Command::Distinguish],
    };
    for family in families {
        match dispatch(*family, &cfg, &cli.out) {
            Ok(()) => {}
            Err(RunError::Skipped(why)) => {
                eprintln!("note: {} skipped: {why}", family.label());
            }
            Err(RunError::Core(e)) => return Err(MainError::Runtime(e.to_string())),
            Err(RunError::Io(e)) => return Err(MainError::Runtime(e.to_string())),
        }
    }
    report::write_manifest(
        &cli.out.join("manifest.txt"),
        &raw,
        cli.command.label(),
        start.elapsed().as_secs_f64(),
    )
    .map_err(|e| MainError::Runtime(e.to_string()))
}

fn dispatch(command: Command, cfg: &config::ExperimentConfig, out: &Path) -> Result<(), RunError> {
    match command {
        Command::Simulate => runner::run_simulate(cfg, out),
        Command::Closeness => runner::run_closeness(cfg, out),
        Command::Forecast => runner::run_forecast(cfg, out),
        Command::Hedge => runner::run_hedge(cfg, out),
        Command::Distinguish => runner::run_distinguish(cfg, out),
        Command::All => unreachable!("expanded by the caller"),
    }
}
