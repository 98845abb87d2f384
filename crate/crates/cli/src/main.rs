use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fairfedjs_cli::{
    cmd_compare, cmd_run, cmd_validate, cmd_whatif, resolve_config, ExperimentManifest,
};
use fairfedjs_core::domain::{JobId, SchedulerKind};

/// Deterministic multi-job federated learning scheduling simulator.
#[derive(Parser)]
#[command(name = "fairfedjs", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run each (scheduler, seed) cell and persist ledgers plus summary.csv.
    Run(BatchArgs),
    /// Run schedulers on shared seeds and also write comparison.csv.
    /// Defaults to all five schedulers.
    Compare(BatchArgs),
    /// Report how a job's schedule index and rank react to a payment change.
    Whatif(WhatifArgs),
    /// Check a config and list every violation.
    Validate(ConfigArg),
}

#[derive(Args)]
struct ConfigArg {
    /// Config file path, or "reference" for the bundled scenario.
    #[arg(long, default_value = "reference")]
    config: String,
}

#[derive(Args)]
struct BatchArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Output directory for ledgers and CSV files.
    #[arg(long, env = "FAIRFEDJS_OUT", default_value = "out")]
    out: PathBuf,
    /// Comma-separated seeds; defaults to the config's seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Comma-separated scheduler names (fairfedjs, random, alt, ub, mjfl).
    #[arg(long, value_delimiter = ',')]
    schedulers: Vec<SchedulerKind>,
}

#[derive(Args)]
struct WhatifArgs {
    /// Path to a saved index snapshot (JSON).
    #[arg(long)]
    snapshot: String,
    /// Job to re-price.
    #[arg(long)]
    job: u32,
    /// Hypothetical payment for that job.
    #[arg(long)]
    payment: f64,
}

fn manifest(
    args: &BatchArgs,
    default_schedulers: Option<&[SchedulerKind]>,
) -> anyhow::Result<ExperimentManifest> {
    let base = resolve_config(&args.config.config, None)?;
    let seeds = if args.seeds.is_empty() {
        vec![base.seed]
    } else {
        args.seeds.clone()
    };
    let schedulers = if args.schedulers.is_empty() {
        default_schedulers.map_or_else(|| vec![base.scheduler], <[SchedulerKind]>::to_vec)
    } else {
        args.schedulers.clone()
    };
    Ok(ExperimentManifest {
        config_path: args.config.config.clone(),
        output_dir: args.out.clone(),
        seeds,
        schedulers,
    })
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run(args) => {
            cmd_run(&manifest(&args, None)?)?;
        }
        Command::Compare(args) => {
            cmd_compare(&manifest(&args, Some(&SchedulerKind::ALL))?)?;
        }
        Command::Whatif(args) => {
            cmd_whatif(
                &args.snapshot,
                JobId(args.job),
                args.payment,
                &mut std::io::stdout(),
            )?;
        }
        Command::Validate(args) => {
            let violations = cmd_validate(&args.config)?;
            if violations.is_empty() {
                println!("ok");
            } else {
                for violation in &violations {
                    println!("{violation}");
                }
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(2)
        }
    }
}
