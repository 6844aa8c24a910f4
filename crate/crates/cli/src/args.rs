use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "flakelens", version, about = "Flaky test prediction from CI test histories and code churn")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the feature matrix for every labeled unit.
    Extract(Args),
    /// Fit a model on all labeled units.
    Train(Args),
    /// Cross-validate a learner and report precision, recall and F1.
    Evaluate(Args),
    /// Score units with a trained model.
    Predict(Args),
    /// Attribute a trained model's scores to features.
    Explain(Args),
    /// Classify tests with the consecutive-failure heuristic.
    Baseline(Args),
    /// Generate a labeled synthetic dataset.
    Synth(Args),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Extract(_) => "extract",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Predict(_) => "predict",
            Command::Explain(_) => "explain",
            Command::Baseline(_) => "baseline",
            Command::Synth(_) => "synth",
        }
    }

    pub fn args(&self) -> &Args {
        match self {
            Command::Extract(a)
            | Command::Train(a)
            | Command::Evaluate(a)
            | Command::Predict(a)
            | Command::Explain(a)
            | Command::Baseline(a)
            | Command::Synth(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LearnerKind {
    Stump,
    Cart,
    Gbm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    Default,
    RecentlyFixed,
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to built-in defaults.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Args {
    /// JSON run configuration.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Parent directory of run directories.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Name of this run's output directory under --out.
    #[arg(long)]
    pub run_id: Option<String>,
    /// Replace an existing run directory.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub seed: Option<u64>,

    /// Dataset directory as written by `synth`.
    #[arg(long, value_name = "DIR", help_heading = "Inputs")]
    pub data: Option<PathBuf>,
    /// History file (JSONL, or JUnit XML by extension); repeatable.
    #[arg(long = "histories", value_name = "FILE", help_heading = "Inputs")]
    pub histories: Vec<PathBuf>,
    #[arg(long, value_name = "FILE", help_heading = "Inputs")]
    pub labels: Option<PathBuf>,
    #[arg(long, value_name = "FILE", help_heading = "Inputs")]
    pub pr: Option<PathBuf>,
    /// Churn TSV named after its repository; repeatable.
    #[arg(long = "churn", value_name = "FILE", help_heading = "Inputs")]
    pub churn: Vec<PathBuf>,
    /// Feature matrix written by `extract`.
    #[arg(long, value_name = "FILE", help_heading = "Inputs")]
    pub features: Option<PathBuf>,
    #[arg(long, value_name = "FILE", help_heading = "Inputs")]
    pub schema: Option<PathBuf>,
    #[arg(long, value_name = "FILE", help_heading = "Inputs")]
    pub model: Option<PathBuf>,
    /// Timestamp for JUnit cases whose suite has none.
    #[arg(long, help_heading = "Inputs")]
    pub junit_timestamp: Option<i64>,

    /// Named feature set and learner, e.g. rq1-recsq, rq2-both, full, top3.
    #[arg(long, help_heading = "Features")]
    pub preset: Option<String>,
    /// Flip-rate decay (constant, linear, exponential, reciprocal, recsq, ewma, ewma:<lambda>); repeatable.
    #[arg(long, help_heading = "Features")]
    pub decay: Vec<String>,
    #[arg(long, help_heading = "Features")]
    pub max_age_days: Option<i64>,
    #[arg(long, help_heading = "Features")]
    pub max_count: Option<usize>,

    #[arg(long, value_enum, help_heading = "Learning")]
    pub learner: Option<LearnerKind>,
    #[arg(long, help_heading = "Learning")]
    pub n_trees: Option<usize>,
    #[arg(long, help_heading = "Learning")]
    pub learning_rate: Option<f64>,
    #[arg(long, help_heading = "Learning")]
    pub max_depth: Option<usize>,
    #[arg(long, help_heading = "Learning")]
    pub min_leaf: Option<usize>,
    /// Cross-validation folds.
    #[arg(long, help_heading = "Learning")]
    pub k: Option<usize>,
    /// Features drawn in the explanation plot.
    #[arg(long, help_heading = "Learning")]
    pub top_n: Option<usize>,
    #[arg(long, help_heading = "Learning")]
    pub baseline_window: Option<usize>,

    #[arg(long, value_enum, help_heading = "Synthetic data")]
    pub scenario: Option<Scenario>,
    #[arg(long, help_heading = "Synthetic data")]
    pub n_flaky: Option<usize>,
    #[arg(long, help_heading = "Synthetic data")]
    pub n_nonflaky: Option<usize>,
    #[arg(long, help_heading = "Synthetic data")]
    pub history_length: Option<usize>,
}
