//! `gbdl`: generate data, train both stages, predict with MC dropout and
//! score the results.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use config::RunConfig;
use error::CliError;

/// Semi-supervised volumetric segmentation with generative Bayesian deep learning.
///
/// Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical failure.
/// GBDL_THREADS caps the worker threads used by predict and bench-passes.
#[derive(Debug, Parser)]
#[command(name = "gbdl", version)]
struct Cli {
    /// TOML run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stream (data, init, training, sampling).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dataset directory.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Output directory for checkpoints, logs and reports.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic dataset.
    GenData,
    /// Train the latent representation model (stage 1).
    TrainLrl,
    /// Write pseudo-labels for the unlabeled volumes with the stage-1 model.
    MakePseudo,
    /// Train the segmentation network (stage 2).
    TrainSeg {
        /// Train on labeled volumes only, with the same step budget.
        #[arg(long)]
        baseline: bool,
    },
    /// Predict test volumes: hard mask plus voxel entropy in bits.
    Predict {
        /// Segmentation checkpoint [default: <run-dir>/seg.ckpt].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Output directory [default: <run-dir>/predictions].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against the test masks.
    Eval {
        /// Prediction directory [default: <run-dir>/predictions].
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Report path [default: <run-dir>/metrics.csv].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time prediction and score it for several pass counts.
    BenchPasses {
        /// Segmentation checkpoint [default: <run-dir>/seg.ckpt].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn threads() -> Result<usize, CliError> {
    match std::env::var("GBDL_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Config(format!("GBDL_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    if let Some(d) = cli.data_dir {
        cfg.data_dir = d;
    }
    if let Some(r) = cli.run_dir {
        cfg.run_dir = r;
    }
    cfg.validate()?;
    let ctx = Context { cfg, threads: threads()? };
    match &cli.command {
        Command::GenData => commands::gen_data(&ctx),
        Command::TrainLrl => commands::train_lrl(&ctx),
        Command::MakePseudo => commands::make_pseudo(&ctx),
        Command::TrainSeg { baseline } => commands::train_seg(&ctx, *baseline),
        Command::Predict { checkpoint, out } => commands::predict(&ctx, checkpoint.as_deref(), out.as_deref()),
        Command::Eval { predictions, out } => commands::eval(&ctx, predictions.as_deref(), out.as_deref()),
        Command::BenchPasses { checkpoint } => commands::bench_passes(&ctx, checkpoint.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let line = first.lines().next().unwrap_or("usage error");
            eprintln!("{line}");
            eprintln!("run `gbdl --help` for usage");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
