//! `diamond`: experiment driver for the diamond-mesh integrators.
//!
//! Exit status is 0 on success, 1 when a solve fails (or `check` finds a
//! defect) and 2 for a bad configuration or command line.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::ConfigArgs;

pub const THREADS_ENV: &str = "DIAMOND_THREADS";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(String),
    Check(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "bad configuration: {m}"),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<diamond::Error> for CliError {
    fn from(e: diamond::Error) -> Self {
        if e.is_solver_failure() {
            CliError::Solver(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "diamond",
    version,
    about = "Multisymplectic diamond-mesh integrators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate and write the final state as CSV.
    Run(ConfigArgs),
    /// Breather convergence ladder: CSV table plus a JSON summary.
    Converge(ConvergeArgs),
    /// Sample continuous and discrete dispersion curves.
    Dispersion(DispersionArgs),
    /// Minimum singular value of the solvability matrix over r and λ.
    Solvability(SolvabilityArgs),
    /// Multisymplectic conservation residual of every diamond.
    Conservation(ConfigArgs),
    /// Validate the system and the Gauss tableaux.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
struct ConvergeArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Where to write the JSON summary. Defaults to the output path with a
    /// `.json` extension, or standard error when writing CSV to stdout.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DispersionSystem {
    Wave,
    LinearMatrixFile,
    Cubic,
}

#[derive(Debug, Args)]
struct DispersionArgs {
    #[arg(long, value_enum, default_value = "wave")]
    system: DispersionSystem,
    /// JSON file with matrices `k`, `l`, `s` for `linear-matrix-file`.
    #[arg(long)]
    matrix_file: Option<PathBuf>,
    /// Courant numbers (Δx = 1); repeatable. Defaults to the figure sets.
    #[arg(long)]
    lambda: Vec<f64>,
    #[arg(long, default_value_t = diamond::dispersion::DEFAULT_RESOLUTION)]
    resolution: usize,
    /// Half-width of the (ξ, ω) window for the continuous curve.
    #[arg(long, default_value_t = 8.0)]
    window: f64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolvabilityArgs {
    #[arg(long, default_value_t = 5)]
    rmax: usize,
    /// Number of evenly spaced Courant numbers on [0, 1].
    #[arg(long, default_value_t = 21)]
    lambda_grid: usize,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Check tableaux for r = 1..=rmax (default: the configured r).
    #[arg(long)]
    rmax: Option<usize>,
}

/// Flag, then config file, then `DIAMOND_THREADS`.
fn thread_count(configured: Option<usize>) -> Result<Option<usize>, CliError> {
    if configured.is_some() {
        return Ok(configured);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(None),
    }
}

fn with_pool<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(threads)? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            with_pool(cfg.threads, || commands::run(&cfg))
        }
        Command::Converge(args) => {
            let cfg = args.config.resolve()?;
            let summary = args.summary;
            with_pool(cfg.threads, || commands::converge(&cfg, summary.as_deref()))
        }
        Command::Dispersion(args) => with_pool(args.threads, || commands::dispersion(&args)),
        Command::Solvability(args) => commands::solvability(&args),
        Command::Conservation(args) => {
            let cfg = args.resolve()?;
            with_pool(cfg.threads, || commands::conservation(&cfg))
        }
        Command::Check(args) => {
            let cfg = args.config.resolve()?;
            commands::check(&cfg, args.rmax)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("diamond: {e}");
            ExitCode::from(e.code())
        }
    }
}
