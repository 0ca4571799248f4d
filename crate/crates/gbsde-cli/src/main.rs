//! Batch front door for the worst-case lattice/PDE solvers: solve, price,
//! validate, and oracle subcommands over TOML run configurations, emitting
//! deterministic CSV artifacts and key=value reports.
//!
//! Exit codes: 0 success, 2 convergence or validation failure, 3
//! configuration error (bad flags, bad config file, or inputs that violate a
//! scheme precondition).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

mod artifacts;
mod config;
mod oracle;
mod price;
mod solve;
mod validate;

/// Error carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// The run can never succeed as configured (exit 3).
    Config(String),
    /// The run was well-posed but did not reach its tolerance (exit 2).
    Convergence(String),
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config(message.into())
    }

    pub fn convergence(message: impl Into<String>) -> Self {
        CliError::Convergence(message.into())
    }
}

impl From<gbsde::Error> for CliError {
    fn from(e: gbsde::Error) -> Self {
        match e {
            gbsde::Error::LadderExhausted { .. } => CliError::Convergence(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "gbsde",
    version,
    about = "Worst-case obstacle solvers over a volatility band: batch solves, \
             American option pricing, invariant validation, classical oracles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts (created if missing).
    #[arg(long, default_value = "gbsde-out")]
    out: PathBuf,
    /// Seed for randomized checks and simulations.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured backward problem and emit its surface.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Extra refinement levels for convergence.csv; each level halves
        /// the space step (and quarters the time step, preserving the
        /// explicit scheme's monotonicity budget).
        #[arg(long = "grid-refine", default_value_t = 0)]
        grid_refine: u32,
    },
    /// Price the configured claim under the volatility band.
    Price {
        #[command(flatten)]
        common: CommonArgs,
        /// Extra refinement levels for convergence.csv; each level halves
        /// the space step (and quarters the time step, preserving the
        /// explicit scheme's monotonicity budget).
        #[arg(long = "grid-refine", default_value_t = 0)]
        grid_refine: u32,
    },
    /// Run invariant suites and report pass/fail per check.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Classical single-volatility reference values for the configured claim.
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Solve {
            common,
            grid_refine,
        } => {
            let config = config::load(&common.config)?;
            solve::run(&config, &common.out, common.seed, *grid_refine)
        }
        Command::Price {
            common,
            grid_refine,
        } => {
            let config = config::load(&common.config)?;
            price::run(&config, &common.out, common.seed, *grid_refine)
        }
        Command::Validate { common } => {
            let config = config::load(&common.config)?;
            validate::run(&config, &common.out, common.seed)
        }
        Command::Oracle { common } => {
            let config = config::load(&common.config)?;
            oracle::run(&config, &common.out, common.seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(3);
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Convergence(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Config(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(3)
        }
    }
}
