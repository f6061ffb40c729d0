//! `sbridge`: runs bridge, simulation and residual scenarios from TOML files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod io;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use config::{Overrides, ScenarioConfig};
use error::{exit_code_of, CliError};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "SBRIDGE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "sbridge",
    version,
    about = "Schrödinger bridge scenario runner"
)]
struct Cli {
    /// Scenario file (TOML); every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory [default: $SBRIDGE_OUT_DIR, then ./sbridge-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed of the path simulation.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of grid nodes.
    #[arg(long, global = true)]
    grid_points: Option<usize>,

    /// Stopping tolerance of the proportional fitting.
    #[arg(long, global = true)]
    tol: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pipeline named in `[scenario] pipeline` of the config file.
    Run,
    /// Fit the bridge factors and write factors, density and drifts.
    BridgeSolve,
    /// Solve the bridge, then simulate its diffusion and compare with the density.
    Simulate,
    /// Second-order check of the forced Burgers residual and compatibility potential.
    BurgersResidual,
    /// Chapman-Kolmogorov violation of a kernel.
    KernelCheckCk {
        /// Kernel tag, overriding `[kernel] kind`.
        #[arg(long)]
        kernel: Option<String>,
    },
    /// Run a built-in verification suite.
    Gallery {
        /// Scenario name (see list-scenarios).
        name: String,
    },
    /// List the built-in gallery scenarios.
    ListScenarios,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code_of(&e)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Command::ListScenarios = cli.command {
        for name in schrodinger_bridge::gallery::SCENARIOS {
            println!("{name}");
        }
        return Ok(());
    }

    let mut cfg = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None if matches!(cli.command, Command::Run) => {
            return Err(CliError::Validation("run needs --config".into()).into())
        }
        None => ScenarioConfig::default(),
    };
    let (pipeline, kernel, scenario) = match cli.command {
        Command::Run => (cfg.scenario.pipeline.clone(), None, None),
        Command::BridgeSolve => ("bridge-solve".into(), None, None),
        Command::Simulate => ("simulate".into(), None, None),
        Command::BurgersResidual => ("burgers-residual".into(), None, None),
        Command::KernelCheckCk { kernel } => ("kernel-check-ck".into(), kernel, None),
        Command::Gallery { name } => ("gallery".into(), None, Some(name)),
        Command::ListScenarios => unreachable!("handled above"),
    };
    cfg.apply(&Overrides {
        out: cli.out,
        seed: cli.seed,
        grid_points: cli.grid_points,
        tol: cli.tol,
        kernel,
        scenario,
    });
    let out = commands::output_dir(&cfg, std::env::var_os(OUT_DIR_ENV).map(PathBuf::from));

    let report =
        commands::execute(&pipeline, &cfg, out).with_context(|| format!("pipeline {pipeline}"))?;
    println!("{report}");
    report.verdict()?;
    Ok(())
}
