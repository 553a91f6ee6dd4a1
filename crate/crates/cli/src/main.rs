//! `tribekit`: dataset and stream generation, source pretraining,
//! test-time adaptation runs and result reports.

mod commands;
mod error;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tribekit::{Method, Variant};

use crate::commands::{AlphaModeArg, SharedVarianceArg};
use crate::settings::List;

#[derive(Parser, Debug)]
#[command(name = "tribekit", version, about = "Test-time adaptation on class-imbalanced, non-i.i.d. streams")]
pub struct Cli {
    /// Plain-text `key = value` config file; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic clean split plus corrupted test domains.
    GenData(GenDataArgs),
    /// Train a source model and write a checkpoint.
    Pretrain(PretrainArgs),
    /// Generate a test-stream order file for a dataset.
    GenStream(GenStreamArgs),
    /// Run adaptation methods over an order file and append records.
    Run(RunArgs),
    /// Summarize a records file.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Number of classes [default: 5]
    #[arg(long)]
    kc: Option<usize>,
    /// Feature dimension [default: 8]
    #[arg(long)]
    dim: Option<usize>,
    /// Samples per class in each split [default: 2000]
    #[arg(long)]
    n: Option<usize>,
    /// Number of corrupted domains [default: 4]
    #[arg(long)]
    domains: Option<usize>,
    /// Corruption strength [default: 1.5]
    #[arg(long)]
    severity: Option<f64>,
    /// Distance of class means from the origin [default: 4]
    #[arg(long)]
    separation: Option<f64>,
    /// Within-class standard deviation [default: 1]
    #[arg(long)]
    class_std: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    /// Dataset directory or CSV file
    #[arg(long)]
    data: Option<PathBuf>,
    /// Hidden layer widths, comma-separated [default: 16]
    #[arg(long)]
    hidden: Option<List<usize>>,
    /// Normalize the network input [default: true]
    #[arg(long)]
    input_norm: Option<bool>,
    /// [default: 30]
    #[arg(long)]
    epochs: Option<usize>,
    /// [default: 0.01]
    #[arg(long)]
    lr: Option<f64>,
    /// [default: 64]
    #[arg(long)]
    batch: Option<usize>,
    /// Fraction of the clean split held out for the accuracy report [default: 0.2]
    #[arg(long)]
    holdout: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenStreamArgs {
    /// Dataset directory
    #[arg(long)]
    data: Option<PathBuf>,
    /// gli-f, gli-v, ptta or iid [default: gli-f]
    #[arg(long)]
    variant: Option<Variant>,
    /// Global imbalance factor [default: 1]
    #[arg(long = "if")]
    imbalance: Option<f64>,
    /// Local imbalance scale [default: 0.1]
    #[arg(long)]
    sigma: Option<f64>,
    /// [default: 64]
    #[arg(long)]
    batch: Option<usize>,
    /// Explicit domain order, comma-separated [default: seeded permutation]
    #[arg(long)]
    domain_order: Option<List<usize>>,
    /// Class exponent indexing [default: exact-if]
    #[arg(long)]
    alpha_mode: Option<AlphaModeArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Order file path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Dataset directory
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Order file written by gen-stream
    #[arg(long)]
    order: Option<PathBuf>,
    /// Methods, comma-separated: test, bn, pl, tent, robust-bn, balanced-bn, tribe [default: tribe]
    #[arg(long)]
    method: Option<List<Method>>,
    /// Adaptation seeds, comma-separated [default: the seed]
    #[arg(long)]
    seeds: Option<List<u64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for (method, seed) cells [default: 1]
    #[arg(long)]
    jobs: Option<usize>,
    /// Records file to append to
    #[arg(long)]
    results: Option<PathBuf>,
    /// Gate threshold as a fraction of ln Kc [default: 0.05 for Kc ≤ 30]
    #[arg(long)]
    h0: Option<f64>,
    /// Anchored loss weight [default: 0.5]
    #[arg(long)]
    lambda_anc: Option<f64>,
    /// Class-balanced mixing [default: 0 for Kc ≤ 30]
    #[arg(long)]
    gamma: Option<f64>,
    /// Balanced statistics step size [default: 0.0005·Kc]
    #[arg(long)]
    eta: Option<f64>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    lr: Option<f64>,
    /// Robust-BN momentum [default: 0.05]
    #[arg(long)]
    robust_momentum: Option<f64>,
    /// summed-row or target-row [default: summed-row]
    #[arg(long)]
    shared_variance: Option<SharedVarianceArg>,
    /// Student augmentation noise [default: 0.2]
    #[arg(long)]
    noise_std: Option<f64>,
    /// Student augmentation scale jitter [default: 0.1]
    #[arg(long)]
    scale_jitter: Option<f64>,
    /// Student augmentation feature dropout [default: 0.1]
    #[arg(long)]
    dropout: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Records file
    #[arg(long)]
    results: Option<PathBuf>,
    /// Print CSV instead of an aligned table
    #[arg(long)]
    csv: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
