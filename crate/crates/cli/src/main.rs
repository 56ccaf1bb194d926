use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use armington_core::pipeline::{cmd_estimate, cmd_ingest, cmd_simulate, cmd_tariff, RunConfig, Sections};
use armington_core::trade_data::Meat;
use clap::{Parser, Subcommand};

/// Two-stage Armington elasticity estimation for meat imports.
#[derive(Debug, Parser)]
#[command(name = "armington", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (flat key = value file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Restrict the run to one meat.
    #[arg(long, global = true)]
    meat: Option<Meat>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Aggregate transactions to country-month cells.
    Ingest,
    /// Evaluate effective tariffs with an audit column.
    Tariff,
    /// Generate a synthetic dataset with its ground truth.
    Simulate,
    /// First stage: LS and IV, diagnostics, microelasticity and aggregates.
    EstimateFirst,
    /// Second stage: pretests, macroelasticity and channel tests.
    EstimateSecond,
    /// Both stages in one report.
    Report,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(meat) = cli.meat {
        cfg.meat = Some(meat);
    }
    let written = match cli.command {
        Command::Ingest => cmd_ingest(&cfg),
        Command::Tariff => cmd_tariff(&cfg),
        Command::Simulate => cmd_simulate(&cfg),
        Command::EstimateFirst => cmd_estimate(&cfg, Sections::First),
        Command::EstimateSecond => cmd_estimate(&cfg, Sections::Second),
        Command::Report => cmd_estimate(&cfg, Sections::All),
    }
    .with_context(|| format!("{:?} failed", cli.command))?;
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
