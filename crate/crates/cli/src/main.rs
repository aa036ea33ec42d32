//! `langlie`: simulate designs, fit records, run verification experiments,
//! and serve live sessions.

mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use langlie_core::rng::DEFAULT_SEED;
use langlie_core::Family;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use commands::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "langlie",
    version,
    about = "Langlie sensitivity testing: simulation, estimation, verification, live sessions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a design against a known sensitivity model and write path tables.
    Simulate(SimulateArgs),
    /// Fit the sensitivity model to a session record by maximum likelihood.
    Estimate(EstimateArgs),
    /// Run a verification experiment (or `all`) and report pass/fail checks.
    Verify(VerifyArgs),
    /// Serve the live-session JSON API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DesignKind {
    Langlie,
    Rm,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "langlie")]
    design: DesignKind,
    #[arg(long, default_value = "probit")]
    family: Family,
    #[arg(long, default_value_t = 3.333, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, default_value_t = 9.999, allow_negative_numbers = true)]
    beta: f64,
    /// Lower stimulus bound.
    #[arg(long, default_value_t = -1.5, allow_negative_numbers = true)]
    a: f64,
    /// Upper stimulus bound.
    #[arg(long, default_value_t = 1.5, allow_negative_numbers = true)]
    b: f64,
    /// Trials per path.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Robbins-Monro step scale c in a_n = c / n (default (b - a) / 2).
    #[arg(long)]
    rm_scale: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "simulate-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Session record (canonical JSON).
    input: PathBuf,
    /// Link family; defaults to the one stored in the record.
    #[arg(long)]
    family: Option<Family>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Experiment name, or `all`.
    experiment: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Trials per path.
    #[arg(long)]
    trials: Option<usize>,
    /// Up-step probability of the comparison walk (coupling-dominance).
    #[arg(long)]
    p: Option<f64>,
    /// JSON file with a full experiment configuration, replacing the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for summaries, tables and manifests.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "LANGLIE_DATA_DIR", default_value = "sessions")]
    data: PathBuf,
    #[arg(long, env = "LANGLIE_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { CliError::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let default_level = if matches!(cli.command, Command::Serve(_)) {
        "info"
    } else {
        "warn"
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default_level)),
        )
        .init();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::Estimate(args) => commands::estimate(args),
        Command::Verify(args) => commands::verify(args),
        Command::Serve(args) => commands::serve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
