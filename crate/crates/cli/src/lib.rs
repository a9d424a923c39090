//! Library side of the `costfolio` binary: argument parsing, configuration
//! and the subcommands, so tests can drive them in-process.

pub mod commands;
pub mod config;
pub mod errors;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::run;
pub use errors::{exit_code, UsageError, VerificationFailed};

#[derive(Debug, Parser)]
#[command(name = "costfolio", version, about = "Cost-sensitive portfolio selection: backtests, training and verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every config-driven command.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(long, short)]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set train.steps=50`. Repeatable;
    /// later flags win.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (created if missing).
    #[arg(long, short, default_value = "costfolio-out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, align and gap-fill the configured assets and summarize them.
    Ingest(ConfigArgs),
    /// Run one strategy, all baselines, or a trained policy over the test range.
    Backtest {
        #[command(flatten)]
        common: ConfigArgs,
        /// Strategy name, `all` for every baseline, or `ppn`.
        #[arg(long, short)]
        strategy: String,
        /// Strategy hyperparameter `key=value`. Repeatable.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        /// Trained policy; required for `ppn`, adds a row to `all`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train the policy network on the training range.
    Train(ConfigArgs),
    /// Train and evaluate over the configured λ × γ grid.
    Sweep {
        #[command(flatten)]
        common: ConfigArgs,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the cost-model, theorem and gradient verification suites.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the full report as JSON into this directory.
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
    /// Print the metric table of a previous run.
    Report {
        /// A `run.json` file or the directory holding one.
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    L1Sign,
}
