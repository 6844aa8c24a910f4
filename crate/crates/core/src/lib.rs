//! Flaky-test prediction: history and churn ingestion, feature
//! extraction, a rule-based baseline, tree learners and TreeSHAP.

pub mod baseline;
pub mod churn;
pub mod dataset;
pub mod error;
pub mod explain;
pub mod features;
pub mod history;
pub mod learner;
pub mod synth;

pub use baseline::{baseline_classify, baseline_predict_flaky, BaselineVerdict};
pub use churn::{ChurnLog, CommitRecord, PullRequestInfo};
pub use dataset::{Dataset, Diagnostic, HistoryWindow};
pub use error::{Error, Result};
pub use explain::{rank_features, tree_shap, FeatureRanking, ShapExplanation};
pub use features::{
    build_schema, featurize, DecayKind, FeatureFlags, FeatureKey, FeatureMatrix, FeatureSchema,
    FeatureVector,
};
pub use history::{ExecutionRecord, TestHistory, TestOutcome, Timestamp, Unit};
pub use learner::{Trainer, TreeEnsembleModel};
pub use synth::{generate, Preset, SynthConfig, SynthDataset};
