use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gpps_core::io::{parse_config, run, RunStatus, Task};
use gpps_core::{ConfigError, RunError};

/// Dipolar Gross–Pitaevskii solver: ground states, dynamics and dimension reduction.
///
/// Exit codes: 0 success, 2 invalid input, 3 numerical alarm, 4 internal error.
/// The worker thread count is read from GPPS_THREADS.
#[derive(Parser)]
#[command(name = "gpps", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the energy by normalized gradient flow.
    Groundstate(RunArgs),
    /// Time-split Fourier evolution with observables.
    Evolve(RunArgs),
    /// Classify the parameter regime, optionally with seeded flows.
    Regime(RunArgs),
    /// Measure the convergence rate of a strongly confined problem.
    Reduce(RunArgs),
    /// Check the kernel symbols against quadrature.
    KernelCheck(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random initial states; overrides `seed` in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

impl Command {
    fn split(self) -> (Task, RunArgs) {
        match self {
            Command::Groundstate(a) => (Task::Groundstate, a),
            Command::Evolve(a) => (Task::Evolve, a),
            Command::Regime(a) => (Task::Regime, a),
            Command::Reduce(a) => (Task::Reduce, a),
            Command::KernelCheck(a) => (Task::KernelCheck, a),
        }
    }
}

fn execute(task: Task, args: RunArgs) -> Result<RunStatus, RunError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| ConfigError::Invalid { key: "--config", reason: format!("{}: {e}", args.config.display()) })?;
    let mut config = parse_config(&text)?.for_task(Some(task))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args
        .out
        .or_else(|| config.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("gpps-{task}")));
    config.output = Some(out.display().to_string());
    for w in &config.warnings {
        eprintln!("warning: {w}");
    }
    let manifest = run(&config, &out)?;
    if let Some(msg) = &manifest.message {
        eprintln!("alarm: {msg}");
    }
    eprintln!("{} written to {}", task, out.display());
    Ok(manifest.status)
}

fn main() -> ExitCode {
    let (task, args) = Cli::parse().command.split();
    match execute(task, args) {
        Ok(RunStatus::Ok) => ExitCode::SUCCESS,
        Ok(RunStatus::Alarm) => ExitCode::from(3),
        Ok(RunStatus::Failed) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
