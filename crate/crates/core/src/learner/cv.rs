use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Trainer, TreeEnsembleModel};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits indices into `k` folds whose class counts are each within one
/// of the exact proportion. Each class is shuffled with `seed`, then dealt
/// round-robin, continuing the deal where the previous class stopped.
pub fn stratified_kfold(y: &[bool], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut neg: Vec<usize> = (0..y.len()).filter(|&i| !y[i]).collect();
    let mut pos: Vec<usize> = (0..y.len()).filter(|&i| y[i]).collect();
    for (name, class) in [("non-flaky", &neg), ("flaky", &pos)] {
        if class.len() < k {
            return Err(Error::Config(format!(
                "{name} class has {} members, fewer than k = {k}",
                class.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    neg.shuffle(&mut rng);
    pos.shuffle(&mut rng);

    let mut assignment = vec![0usize; y.len()];
    let mut offset = 0;
    for class in [&neg, &pos] {
        for (j, &i) in class.iter().enumerate() {
            assignment[i] = (offset + j) % k;
        }
        offset = (offset + class.len()) % k;
    }
    Ok((0..k)
        .map(|f| Fold {
            train: (0..y.len()).filter(|&i| assignment[i] != f).collect(),
            test: (0..y.len()).filter(|&i| assignment[i] == f).collect(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall, computed from counts as
    /// `2tp / (2tp + fp + fn)`.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub per_fold: Vec<FoldMetrics>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    /// Relative standard deviation of stump thresholds across folds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_threshold: Option<f64>,
}

/// Population standard deviation over mean; `None` for an empty input or
/// a zero mean.
pub fn relative_std(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return None;
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(var.sqrt() / mean.abs())
}

impl EvaluationReport {
    pub fn from_folds(per_fold: Vec<FoldMetrics>) -> Self {
        let n = per_fold.len().max(1) as f64;
        let mean = |f: fn(&FoldMetrics) -> f64| per_fold.iter().map(f).sum::<f64>() / n;
        let thresholds: Option<Vec<f64>> = per_fold.iter().map(|f| f.threshold).collect();
        EvaluationReport {
            mean_precision: mean(|f| f.precision),
            mean_recall: mean(|f| f.recall),
            mean_f1: mean(|f| f.f1),
            cv_threshold: thresholds.as_deref().and_then(relative_std),
            per_fold,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Fixed-width text rendering.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<6} {:>9} {:>9} {:>9} {:>12}", "fold", "precision", "recall", "f1", "threshold");
        for (i, f) in self.per_fold.iter().enumerate() {
            let thr = f.threshold.map_or("-".to_string(), |t| format!("{t:.6}"));
            let _ = writeln!(
                out,
                "{:<6} {:>9.4} {:>9.4} {:>9.4} {:>12}",
                i + 1,
                f.precision,
                f.recall,
                f.f1,
                thr
            );
        }
        let cv = self.cv_threshold.map_or("-".to_string(), |c| format!("cv={c:.4}"));
        let _ = writeln!(
            out,
            "{:<6} {:>9.4} {:>9.4} {:>9.4} {:>12}",
            "mean", self.mean_precision, self.mean_recall, self.mean_f1, cv
        );
        out
    }
}

/// Per-fold model and test-set probabilities from a cross-validation run.
#[derive(Debug, Clone)]
pub struct FoldRun {
    pub fold: Fold,
    pub model: TreeEnsembleModel,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub report: EvaluationReport,
    pub folds: Vec<FoldRun>,
}

/// Trains on each fold's training part and scores its test part.
pub fn cross_validate(data: &FeatureMatrix, trainer: &Trainer, k: usize, seed: u64) -> Result<CrossValidation> {
    let y = data.required_labels()?;
    let folds = stratified_kfold(&y, k, seed)?;
    let mut metrics = Vec::with_capacity(k);
    let mut runs = Vec::with_capacity(k);
    for fold in folds {
        let x_train: Vec<Vec<f64>> = fold.train.iter().map(|&i| data.rows[i].clone()).collect();
        let y_train: Vec<bool> = fold.train.iter().map(|&i| y[i]).collect();
        let model = trainer.fit(&x_train, &y_train, &data.schema)?;
        let probabilities: Vec<f64> = fold.test.iter().map(|&i| model.predict_row(&data.rows[i])).collect();
        let predicted: Vec<bool> = probabilities.iter().map(|&p| p > 0.5).collect();
        let actual: Vec<bool> = fold.test.iter().map(|&i| y[i]).collect();
        let confusion = Confusion::from_predictions(&predicted, &actual);
        metrics.push(FoldMetrics {
            precision: confusion.precision(),
            recall: confusion.recall(),
            f1: confusion.f1(),
            confusion,
            threshold: model.stump_threshold(),
        });
        runs.push(FoldRun {
            fold,
            model,
            probabilities,
        });
    }
    Ok(CrossValidation {
        report: EvaluationReport::from_folds(metrics),
        folds: runs,
    })
}

pub fn evaluate(data: &FeatureMatrix, trainer: &Trainer, k: usize, seed: u64) -> Result<EvaluationReport> {
    cross_validate(data, trainer, k, seed).map(|cv| cv.report)
}
