//! `lrex`: experiment driver for the exclusion-process and Burgers suites.
//!
//! Exit status is 0 when every enabled check passes, 1 when a check fails
//! and 2 on configuration or runtime errors.

mod config;
mod report;
mod suites;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{ExperimentConfig, SuiteName};
use report::Summary;
use suites::{run_suite, RunContext};

#[derive(Parser, Debug)]
#[command(name = "lrex", version, about = "Long-range exclusion process and stochastic Burgers experiments")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `run.master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides `run.threads`.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides `run.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write the JSON summary to this path.
    #[arg(long, global = true)]
    json_summary: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate the kernel and print its moments and jump laws.
    ValidateKernel,
    /// Run stationary replicas and write the martingale decomposition.
    Simulate {
        /// Replica count; overrides `run.replicas`.
        #[arg(long)]
        replicas: Option<usize>,
        /// Write accepted jumps as NDJSON, one file per replica.
        #[arg(long)]
        dump_events: bool,
    },
    /// Deterministic refinement and exact enumeration checks.
    CheckLemmas,
    /// Monte-Carlo replacement estimates.
    BgPrinciple {
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Stochastic Burgers solver replicas.
    Sbe {
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Particle system against solver and closed-form covariances.
    Compare {
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Run the suites listed under `suites` in the config.
    Run,
}

fn execute(cli: Cli) -> Result<Summary> {
    let path = cli
        .config
        .ok_or_else(|| anyhow::anyhow!("--config <file> is required"))?;
    let cfg = ExperimentConfig::from_path(&path)?;
    let (suites, replicas, dump_events) = match cli.command {
        Command::ValidateKernel => (vec![SuiteName::ValidateKernel], None, false),
        Command::Simulate { replicas, dump_events } => (vec![SuiteName::Simulate], replicas, dump_events),
        Command::CheckLemmas => (vec![SuiteName::CheckLemmas], None, false),
        Command::BgPrinciple { replicas } => (vec![SuiteName::BgPrinciple], replicas, false),
        Command::Sbe { replicas } => (vec![SuiteName::Sbe], replicas, false),
        Command::Compare { replicas } => (vec![SuiteName::Compare], replicas, false),
        Command::Run => {
            if cfg.suites.is_empty() {
                anyhow::bail!("config lists no suites");
            }
            (cfg.suites.clone(), None, false)
        }
    };
    let ctx = RunContext {
        out: cli.out.unwrap_or_else(|| cfg.run.out.clone()),
        threads: cli.threads.unwrap_or(cfg.run.threads).max(1),
        seed: cli.seed.unwrap_or(cfg.run.master_seed),
        replicas: replicas.unwrap_or(cfg.run.replicas),
    };
    if ctx.replicas == 0 {
        anyhow::bail!("--replicas must be at least 1");
    }
    let mut summary = Summary::default();
    for s in suites {
        summary.extend(run_suite(s, &cfg, &ctx, dump_events)?);
    }
    summary.write_json(&ctx.out.join("summary.json"))?;
    if let Some(p) = cli.json_summary {
        summary.write_json(&p)?;
    }
    Ok(summary)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(summary) => {
            summary.print();
            if summary.pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
