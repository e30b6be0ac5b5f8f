//! `shopper`: simulate, fit, evaluate and inspect the basket choice model.
//!
//! Exit codes: 0 success, 2 input error, 3 optimization error, 4 checkpoint
//! or catalog incompatibility.

mod commands;
mod config;
mod dataset;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "shopper", version, about = "Sequential basket choice model fitted by variational inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// TOML run configuration with [model], [optimizer], [simulate] and [paths] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides every seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for the data-parallel kernels (1 runs sequentially).
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    /// Each purchased item given the rest of its basket.
    Item,
    /// Every ordered triplet from baskets with at least three items.
    Triplets,
    /// Whole baskets in every order.
    Basket,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the two-segment toy world and its price-intervention test set.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the model and write a checkpoint plus a training trace.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Checkpoint file to write.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Directory for the trace and manifest (default: the checkpoint's directory).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Held-out log-likelihood tables.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Directory for the result table and manifest.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Price-deviation thresholds in percent, e.g. `2.5,5,15` (item mode only).
        #[arg(long, value_delimiter = ',')]
        skew: Vec<f64>,
        #[arg(long, value_enum, default_value_t = EvalMode::Item)]
        mode: EvalMode,
    },
    /// Top complements and most exchangeable items per query item.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Query item ids.
        #[arg(long, value_delimiter = ',', conflicts_with = "all_pairs_top")]
        items: Vec<String>,
        /// Query every item, listing this many partners each.
        #[arg(long)]
        all_pairs_top: Option<usize>,
        /// Partners listed per query with --items.
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Posterior means as item, user and week tables.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { common, out } => commands::simulate::run(&common, out),
        Command::Fit {
            common,
            data_dir,
            checkpoint,
            out,
            max_iterations,
        } => commands::fit::run(&common, data_dir, checkpoint, out, max_iterations),
        Command::Eval {
            common,
            checkpoint,
            data_dir,
            out,
            skew,
            mode,
        } => commands::eval::run(&common, checkpoint, data_dir, out, &skew, mode),
        Command::Metrics {
            common,
            checkpoint,
            out,
            items,
            all_pairs_top,
            top,
        } => commands::metrics::run(&common, checkpoint, out, &items, all_pairs_top, top),
        Command::Export { common, checkpoint, out } => commands::export::run(&common, checkpoint, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
