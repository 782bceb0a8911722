//! `gedg`: command-line driver for exchange-driven growth runs.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime abort, 3 bound violation.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use gedg_core::GedgError;

use crate::config::{parse_config, ConfigErrors, RunConfig};
use crate::run::Outcome;

#[derive(Debug, Parser)]
#[command(name = "gedg", version, about = "Exchange-driven growth: sectional solver, particle oracle and bound checks")]
struct Cli {
    /// Worker threads for replicas and sweep points (falls back to GEDG_JOBS).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured mode and write its artifacts.
    Run { config: PathBuf },
    /// Check the configured kernel against its growth class by sampling.
    ValidateKernel { config: PathBuf },
    /// Solve deterministically and check the a priori bounds at every output time.
    CheckBounds { config: PathBuf },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),
    #[error(transparent)]
    Core(#[from] GedgError),
    #[error("invalid --jobs / GEDG_JOBS value: {0}")]
    Jobs(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Jobs(_) => 1,
            CliError::Core(e) => match e {
                GedgError::Config(_) | GedgError::Data(_) | GedgError::Domain(_) => 1,
                _ => 2,
            },
        }
    }
}

fn jobs(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(j) = flag {
        return if j == 0 {
            Err(CliError::Jobs("0".into()))
        } else {
            Ok(Some(j))
        };
    }
    match std::env::var("GEDG_JOBS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(j) if j > 0 => Ok(Some(j)),
            _ => Err(CliError::Jobs(v)),
        },
        Err(_) => Ok(None),
    }
}

type Action = fn(&RunConfig) -> Result<Outcome, GedgError>;

fn dispatch(cli: Cli) -> Result<Outcome, CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs(cli.jobs)? {
        pool = pool.num_threads(j);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Jobs(e.to_string()))?;
    let (path, action): (PathBuf, Action) = match cli.command {
        Command::Run { config } => (config, run::execute),
        Command::ValidateKernel { config } => (config, run::validate_kernel),
        Command::CheckBounds { config } => (config, run::check_bounds),
    };
    let cfg = parse_config(&path)?;
    Ok(pool.install(|| action(&cfg))?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::BoundViolation(list)) => {
            eprintln!("bound violation:");
            for v in &list {
                eprintln!("  - {v}");
            }
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
