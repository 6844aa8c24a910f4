//! Tree learners, cross-validation and classification metrics.

mod cart;
mod cv;
mod model;
mod tree;

pub use cv::{
    cross_validate, evaluate, relative_std, stratified_kfold, Confusion, CrossValidation,
    EvaluationReport, Fold, FoldMetrics, FoldRun,
};
pub use model::{
    fit_cart, fit_gbm, fit_gbm_traced, fit_stump, log_loss, predict_proba, sigmoid, CartParams,
    GbmParams, ModelKind, Trainer, TreeEnsembleModel, MODEL_FORMAT_VERSION,
};
pub use tree::{Node, Tree};
