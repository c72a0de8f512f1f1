//! `xscale`: synthesize data, train, score and evaluate.
//!
//! Exit codes: 0 on success, 2 for invalid configuration or data, 3 for
//! runtime failures.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl From<xscale_core::Error> for CliError {
    fn from(e: xscale_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "xscale", version, about = "Cross-scale reconstruction anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// TOML run configuration; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a clean training CSV and a labelled test CSV.
    Synth(Common),
    /// Fit a model on data.train and write a checkpoint and logs.
    Train(Common),
    /// Score data.test, calibrate a threshold and write scores and labels.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compare scores and predicted labels with the truth in data.test.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Score file from `score`; defaults to OUT/scores.csv.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Label file from `score`; defaults to the labels.csv next to the scores.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(c) => commands::synth(&c),
        Command::Train(c) => commands::train(&c),
        Command::Score { common, checkpoint } => commands::score(&common, &checkpoint),
        Command::Eval {
            common,
            scores,
            predictions,
        } => commands::eval(&common, scores, predictions),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
