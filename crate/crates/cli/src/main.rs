//! `aggnet` command-line runner.

mod commands;
mod overrides;

use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::overrides::Overrides;

#[derive(Debug, Parser)]
#[command(name = "aggnet", version, about = "Agg-GNN wireless power control experiments")]
struct Cli {
    /// Flat `key = value` configuration file; flags below override it.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    SameSize,
    Scaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Axis {
    Hops,
    Delta,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a policy and replay the baselines on the same realizations.
    Train,
    /// Check permutation equivariance of aggregation, network and rewards.
    Permtest {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Filter checkpoint to test; a random filter is drawn otherwise.
        #[arg(long)]
        filter: Option<std::path::PathBuf>,
        /// Use random activation subsets in the replayed histories.
        #[arg(long = "async")]
        asynchronous: bool,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
    /// Evaluate a frozen filter on freshly drawn networks.
    Transfer {
        #[arg(long)]
        filter: std::path::PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::SameSize)]
        mode: Mode,
        /// Network size to evaluate on; defaults to `m`.
        #[arg(long)]
        m_prime: Option<usize>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Train one policy per value of an axis.
    Sweep {
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Run only Equal, Random and WMMSE for `iterations` steps.
    Baseline,
    /// Evaluate a frozen filter on the configured network.
    Eval {
        #[arg(long)]
        filter: std::path::PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
