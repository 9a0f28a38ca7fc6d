#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

use commands::CliError;

#[derive(Debug, Parser)]
#[command(name = "congestion-lab", version, about = "Pricing experiments on congested single-server queues")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TraceKind {
    /// Emergency-department trace: one row per constant-rate piece.
    Ed,
    /// The multiplier grid itself (`day,slot,multiplier`).
    Grid,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Steady state, exact gradient and asymptotic variances of a scenario.
    Analytic {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        p: f64,
        /// Scenario parameter as `key=value`; repeatable.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
    },
    /// Simulate one replicate of a config and save its event log.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
        /// Log CSV path; overrides `output` in the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Every applicable estimator on a saved event log.
    Estimate {
        #[arg(long)]
        log: PathBuf,
        #[arg(long = "kernel", value_name = "S")]
        kernels: Vec<f64>,
        #[arg(long)]
        truncation: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo replication of a config.
    Mc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        /// Replicate CSV path; aggregates and metadata go next to it.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build a non-stationary trace.
    Trace {
        #[arg(long, value_enum)]
        build: TraceKind,
        #[arg(long, default_value_t = 4)]
        weeks: usize,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// `day,slot,multiplier` grid replacing the synthetic week.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Plot-ready data for the four illustrative scenarios.
    Gallery {
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// RMSE against interval and kernel length on the ED trace.
    Nonstationary {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analytic { scenario, p, params } => commands::analytic(&scenario, p, &params),
        Command::Simulate { config, replicate, output } => commands::simulate(&config, replicate, output),
        Command::Estimate { log, kernels, truncation, alpha, output } => {
            commands::estimate(&log, kernels, truncation, alpha, output)
        }
        Command::Mc { config, threads, output } => commands::mc(&config, threads, output),
        Command::Trace { build, weeks, p, grid, output } => commands::trace(build, weeks, p, grid, output),
        Command::Gallery { output } => commands::gallery(output),
        Command::Nonstationary { config, threads, output } => commands::nonstationary(config, threads, output),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
