use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mgol::harness::{run_experiment, sweep, theory_params, ExperimentConfig, SweepConfig};

#[derive(Parser)]
#[command(
    name = "mgol",
    version,
    about = "Online multi-group learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and print the JSON report.
    Run(RunArgs),
    /// Run a grid of configs and print one summary row per cell and seed.
    Sweep(RunArgs),
    /// Parse and check a config without running it.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the parameter values the regret analysis asks for.
    TheoryParams {
        #[arg(long = "horizon", short = 'T')]
        horizon: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long = "actions", short = 'K', default_value_t = 2)]
        actions: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Replaces the config's seed list with this one seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    diagnostics: bool,
    #[arg(long)]
    freeze_gftpl_noise: bool,
}

impl RunArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        cfg.diagnostics |= self.diagnostics;
        cfg.params.freeze_noise |= self.freeze_gftpl_noise;
    }
}

fn read(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = ExperimentConfig::from_json_str(&read(&args.config)?)?;
            args.apply(&mut cfg);
            let report = run_experiment(&cfg)?;
            println!("{}", report.to_json_string());
        }
        Command::Sweep(args) => {
            let mut s: SweepConfig = serde_json::from_str(&read(&args.config)?)?;
            args.apply(&mut s.base);
            let rows = sweep(&s)?;
            println!("{}", serde_json::to_string_pretty(&rows)?);
        }
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::from_json_str(&read(&config)?)?;
            let inst = cfg.validate()?;
            println!(
                "ok: {} contexts, {} hypotheses, {} groups, {} seeds, T = {}",
                inst.m(),
                inst.hypothesis_count(),
                inst.group_count(),
                cfg.seeds.len(),
                cfg.horizon
            );
        }
        Command::TheoryParams {
            horizon,
            sigma,
            actions,
        } => {
            let p = theory_params(horizon, sigma, actions)?;
            println!("{}", serde_json::to_string_pretty(&p)?);
        }
    }
    Ok(())
}
