//! `gridcast` command-line pipeline: dataset generation, training,
//! prediction export and evaluation.

pub mod commands;
pub mod dump;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gridcast_core::grid::LabelVariant;

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "gridcast", version, about = "Semantics-aware occupancy grid prediction")]
pub struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write a dataset.
    Gen(GenArgs),
    /// Train one stage of a model on the training split of a dataset.
    Train(TrainArgs),
    /// Roll a model out on one sequence and export the predicted frames.
    Predict(PredictArgs),
    /// Score models and baselines on the test split of a dataset.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON configuration for the command.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Square grid side in cells.
    #[arg(long)]
    pub grid_size: Option<usize>,

    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<LabelVariant>,
}

fn parse_variant(s: &str) -> Result<LabelVariant, String> {
    s.parse().map_err(|e: gridcast_core::Error| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,

    /// Overrides the sequence count of the scenario.
    #[arg(long)]
    pub sequences: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long)]
    pub dataset: PathBuf,

    /// semantics, ours, prednet or double-prong.
    #[arg(long)]
    pub model: String,

    #[arg(long, default_value_t = 1)]
    pub stage: u8,

    /// Trained semantics checkpoint that a new `ours` model is built on.
    #[arg(long)]
    pub semantics: Option<PathBuf>,

    /// Checkpoint to continue from; required for stage 2.
    #[arg(long)]
    pub init: Option<PathBuf>,

    /// Train, validation and test ratios.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub split: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long)]
    pub checkpoint: PathBuf,

    #[arg(long)]
    pub dataset: PathBuf,

    /// Sequence index within the dataset.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,

    /// Model checkpoint; repeat to compare several.
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<PathBuf>,

    #[arg(long)]
    pub dataset: PathBuf,

    /// Reference forecaster: oracle or copy-last. Repeatable.
    #[arg(long = "baseline")]
    pub baselines: Vec<String>,

    /// Scenario tag written to the CSVs; defaults to the dataset file stem.
    #[arg(long)]
    pub scenario: Option<String>,

    /// Score every sequence instead of the test split.
    #[arg(long)]
    pub all: bool,

    /// Train, validation and test ratios used to find the test split.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub split: Option<Vec<f64>>,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Gen(a) => commands::gen::run(&a),
        Command::Train(a) => commands::train::run(&a),
        Command::Predict(a) => commands::predict::run(&a),
        Command::Eval(a) => commands::eval::run(&a),
    }
}
