//! `alm`: equilibrium strategies and value functions for mean-variance
//! asset-liability management, from a scenario file to plot-ready CSVs.
//!
//! Exit status: 0 on success, 1 when a verification check fails, 2 on
//! configuration, validation or I/O errors.

// Guards are written as `!(x > 0.0)` so NaN inputs fail validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod scenario;
mod verify;

use scenario::Scenario;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] alm_core::AlmError),
}

#[derive(Parser)]
#[command(
    name = "alm",
    version,
    about = "Equilibrium mean-variance asset-liability management",
    long_about = "Computes the closed-form equilibrium strategy and value function for \
mean-variance asset-liability management with liability-dependent risk aversion, \
and verifies them against quadrature, residual and Monte Carlo oracles."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Override the scenario's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario's Monte Carlo path count.
    #[arg(long)]
    paths: Option<usize>,
    /// Override the scenario's step count.
    #[arg(long)]
    steps: Option<usize>,
}

impl CommonArgs {
    fn load(&self) -> Result<Scenario, CliError> {
        let mut scenario = Scenario::load(&self.scenario)?;
        if let Some(seed) = self.seed {
            scenario.sim.seed = seed;
        }
        if let Some(paths) = self.paths {
            scenario.sim.paths = paths;
        }
        if let Some(steps) = self.steps {
            scenario.sim.steps = steps;
        }
        Ok(scenario)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the kernel functions and feedback gains on [0, T].
    Gains(CommonArgs),
    /// Tabulate the equilibrium control across time and liability levels.
    Strategy {
        #[command(flatten)]
        common: CommonArgs,
        /// Liability levels for the curves (defaults to the scenario's l0).
        #[arg(long, value_delimiter = ',')]
        liabilities: Vec<f64>,
    },
    /// Closed-form equilibrium value at each evaluation time.
    Value(CommonArgs),
    /// Monte Carlo cost estimates under the equilibrium strategy.
    Simulate(CommonArgs),
    /// Strategy and value against a preference-weight grid.
    Sweep(CommonArgs),
    /// Run the full verification battery and write a report CSV.
    ///
    /// Raw moment cross-checks run at a 16x refined step count to keep the
    /// Euler discretization bias of the surplus below Monte Carlo
    /// resolution; all other checks use the scenario's settings.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Debug: double the constant gain f4 of the simulated control, a
        /// negative control that must make the perturbation checks fail.
        #[arg(long)]
        corrupt_f4: bool,
    },
}

fn run() -> Result<bool, CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Gains(common) => {
            commands::cmd_gains(&common.load()?, &common.out)?;
            Ok(true)
        }
        Command::Strategy { common, liabilities } => {
            commands::cmd_strategy(&common.load()?, &liabilities, &common.out)?;
            Ok(true)
        }
        Command::Value(common) => {
            commands::cmd_value(&common.load()?, &common.out)?;
            Ok(true)
        }
        Command::Simulate(common) => {
            commands::cmd_simulate(&common.load()?, &common.out)?;
            Ok(true)
        }
        Command::Sweep(common) => {
            commands::cmd_sweep(&common.load()?, &common.out)?;
            Ok(true)
        }
        Command::Verify { common, corrupt_f4 } => {
            let scenario = common.load()?;
            let rows = verify::run_battery(&scenario, corrupt_f4)?;
            commands::write_report(&rows, &common.out)?;
            commands::print_report_summary(&rows);
            Ok(rows.iter().all(|r| r.pass))
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
