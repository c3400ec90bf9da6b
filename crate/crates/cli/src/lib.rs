//! Scenario runner for the novikov-core laboratory: configuration, execution
//! and deterministic export.

pub mod commands;
pub mod config;
pub mod output;
pub mod validate;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::{AnalysisFailure, RunContext};
use crate::config::{ConfigError, ScenarioConfig};
use crate::validate::Fault;

pub use crate::commands::exit_code;

#[derive(Debug, Parser)]
#[command(name = "novikov", version, about = "Numerical lab for the two-component Novikov system")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve a datum and export the trajectory, conserved log and Eulerian fields.
    Evolve(CommonArgs),
    /// Evolve and analyze the points where W or Z reaches ±π.
    Singular(CommonArgs),
    /// Distance upper bounds between two evolving data on [−T, T].
    Metric(CommonArgs),
    /// Run the property suite on a scenario (a built-in one without --config).
    Validate(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario file (TOML, schema "novikov-scenario/1").
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides [output] dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Reduced resolution.
    #[arg(long)]
    pub quick: bool,
    /// Seed for randomized trials; overrides the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Test hook: deliberately break a component.
    #[arg(long, value_enum, hide = true)]
    pub inject_fault: Option<FaultArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    BrokenScan,
}

const DEFAULT_OUT: &str = "novikov-out";

fn load(args: &CommonArgs, required: bool) -> anyhow::Result<ScenarioConfig> {
    let mut cfg = match &args.config {
        Some(p) => ScenarioConfig::load(p)?,
        None if required => return Err(ConfigError("--config is required".into()).into()),
        None => ScenarioConfig::parse(validate::DEFAULT_SCENARIO)?,
    };
    if args.quick {
        cfg = cfg.quick();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn context(args: &CommonArgs, cfg: ScenarioConfig) -> RunContext {
    let out = args.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    RunContext { config: cfg, out }
}

/// Executes one command; text meant for the user goes to stdout.
pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Evolve(a) => commands::run_evolve(&context(a, load(a, true)?)),
        Command::Singular(a) => commands::run_singular(&context(a, load(a, true)?)),
        Command::Metric(a) => commands::run_metric(&context(a, load(a, true)?)),
        Command::Validate(a) => {
            let cfg = load(a, false)?;
            let fault = a.inject_fault.map(|FaultArg::BrokenScan| Fault::BrokenScan);
            let results = validate::run_checks(&cfg, a.quick, cfg.seed, fault)?;
            for r in &results {
                println!("{}", r.line());
            }
            let out = a.out.clone().or_else(|| cfg.output.dir.clone());
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                output::write_json(&dir.join("validate.json"), &results)?;
            }
            let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(AnalysisFailure(format!("failed checks: {}", failed.join(", "))).into())
            }
        }
    }
}
