//! `nasp`: command-line driver for the rule-consistent classification pipeline.

mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "nasp",
    version,
    about = "Soft-rule mining, rule-aware training and logic-consistency auditing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted implication rules.
    Synth(SynthArgs),
    /// Seeded train/validation/test partition of a dataset file.
    Split(SplitArgs),
    /// Mine soft implication rules from a training set.
    MineRules(MineArgs),
    /// Write a rule file as an ASP program of weak constraints.
    EmitAsp(EmitAspArgs),
    /// Add rule-consistent copies of training records.
    Augment(AugmentArgs),
    /// Fit features and train the classifier.
    Train(TrainArgs),
    /// Tune thresholds, predict a test set and report metrics.
    Evaluate(EvaluateArgs),
    /// Count rule violations in saved predictions.
    Audit(AuditArgs),
}

#[derive(Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    pub num_records: usize,
    #[arg(long, default_value_t = 4)]
    pub vocab_size: usize,
    /// Planted rule as `L0=>L1`; repeatable.
    #[arg(long = "rule")]
    pub rules: Vec<String>,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.6)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 0.2)]
    pub val_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Serialize)]
pub struct MineArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Minimum premise frequency P(a).
    #[arg(long, default_value_t = 0.01)]
    pub min_support: f64,
    /// Minimum confidence P(b | a).
    #[arg(long, default_value_t = 0.7)]
    pub min_confidence: f64,
    /// Expert rules merged into the mined set; expert weights win.
    #[arg(long)]
    pub expert_rules: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Serialize)]
pub struct EmitAspArgs {
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Serialize)]
pub struct AugmentArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub rules: PathBuf,
    /// Cap on added records, in percent of the original size.
    #[arg(long)]
    pub max_growth: Option<f64>,
    /// Apply rules to a fixpoint instead of a single step.
    #[arg(long)]
    pub closure: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Micro,
    Macro,
}

#[derive(Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub rules: PathBuf,
    /// Fuzzy rule weight (e.g. 0.1, 0.5, 0.9); 0 trains plain weighted BCE.
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 5e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub l2: f64,
    #[arg(long, default_value_t = 100.0)]
    pub class_weight_cap: f64,
    /// Use the raw class-weight ratio without an upper clamp.
    #[arg(long)]
    pub no_class_weight_cap: bool,
    #[arg(long, value_enum, default_value_t = Metric::Micro)]
    pub early_stop_metric: Metric,
    #[arg(long, default_value_t = 1)]
    pub min_token_freq: usize,
    #[arg(long, default_value_t = 20_000)]
    pub max_features: usize,
    #[arg(long)]
    pub no_lowercase: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// Per-label F1 sweep on the validation set.
    Tuned,
    /// One threshold for every label (see --threshold).
    Uniform,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroSupportArg {
    One,
    Zero,
}

#[derive(Args, Serialize)]
pub struct EvaluateArgs {
    /// Output directory of a `train` run.
    #[arg(long)]
    pub model_dir: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Rules to audit against; defaults to the rules saved with the model.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ThresholdMode::Tuned)]
    pub thresholds: ThresholdMode,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// F1 of a label that never occurs and is never predicted.
    #[arg(long, value_enum, default_value_t = ZeroSupportArg::One)]
    pub zero_support_f1: ZeroSupportArg,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Serialize)]
pub struct AuditArgs {
    /// `predictions.json` written by `evaluate`.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub rules: PathBuf,
    /// Cross-check every document against an external clingo executable.
    #[arg(long)]
    pub clingo_path: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Split(a) => commands::split(a),
        Command::MineRules(a) => commands::mine_rules(a),
        Command::EmitAsp(a) => commands::emit_asp(a),
        Command::Augment(a) => commands::augment(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Audit(a) => commands::audit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
