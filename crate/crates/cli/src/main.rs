//! Command-line front end for the freshness-scheduling toolkit: solves
//! stationary randomized and CMDP policies, simulates policy files, runs
//! parameter sweeps and reproduces the reference experiments.

mod commands;
mod config;
mod output;

use anyhow::Result;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

use commands::{ReproduceTarget, SweepParam};
use config::ExperimentConfig;
use vaoi_core::cosrp::Scheme;

#[derive(Parser)]
#[command(name = "vaoi", version, about = "Freshness-optimal broadcast scheduling: solvers and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e| format!("{e}"))
}

#[derive(Subcommand)]
enum Command {
    /// Solve the stationary randomized policy for the configured budget
    SolveCosrp {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_scheme)]
        scheme: Option<Scheme>,
    },
    /// Solve the constrained-MDP policy for the configured budget
    SolveCmdp {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_scheme)]
        scheme: Option<Scheme>,
    },
    /// Monte Carlo simulation of a policy file
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Policy table produced by solve-cosrp (or hand-written)
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve across a linear grid of one parameter
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_scheme)]
        scheme: Option<Scheme>,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
    },
    /// Re-run a reference experiment grid and emit its CSV bundle
    Reproduce {
        #[arg(long, value_enum)]
        target: ReproduceTarget,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve and report the two-approximation lower bound
    Bound {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_scheme)]
        scheme: Option<Scheme>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::SolveCosrp { config, out, scheme } => {
            let cfg = ExperimentConfig::load(&config)?;
            commands::cmd_solve_cosrp(&cfg, &commands::out_dir(out), scheme)
        }
        Command::SolveCmdp { config, out, scheme } => {
            let cfg = ExperimentConfig::load(&config)?;
            commands::cmd_solve_cmdp(&cfg, &commands::out_dir(out), scheme)
        }
        Command::Simulate { config, policy, out, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            commands::cmd_simulate(&cfg, &policy, &commands::out_dir(out), seed)
        }
        Command::Sweep { config, out, scheme, param, from, to, steps } => {
            let cfg = ExperimentConfig::load(&config)?;
            commands::cmd_sweep(&cfg, &commands::out_dir(out), scheme, param, from, to, steps)
        }
        Command::Reproduce { target, out } => commands::cmd_reproduce(target, &commands::out_dir(out)),
        Command::Bound { config, out, scheme } => {
            let cfg = ExperimentConfig::load(&config)?;
            commands::cmd_bound(&cfg, &commands::out_dir(out), scheme)
        }
    }
}
