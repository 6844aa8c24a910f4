use std::fmt;

use serde::{Deserialize, Serialize};

use super::cart::{best_split, grow, GrowParams, Target};
use super::tree::{Node, Tree};
use crate::error::{Error, Result};
use crate::features::{FeatureSchema, FeatureVector};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Stump,
    Cart,
    Gbm,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Stump => "stump",
            ModelKind::Cart => "cart",
            ModelKind::Gbm => "gbm",
        })
    }
}

/// A fitted tree model. For stumps and CART trees the raw output is the
/// positive-class fraction of the reached leaf; for boosted ensembles it
/// is the log-odds `initial_score + learning_rate * sum(trees)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsembleModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub initial_score: f64,
    pub learning_rate: f64,
    pub schema: FeatureSchema,
    pub trees: Vec<Tree>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl TreeEnsembleModel {
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        match self.kind {
            ModelKind::Stump | ModelKind::Cart => self.trees[0].predict(x),
            ModelKind::Gbm => {
                let mut sum = 0.0;
                for t in &self.trees {
                    sum += t.predict(x);
                }
                self.initial_score + self.learning_rate * sum
            }
        }
    }

    /// Probability of the flaky class for a row in schema order.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self.kind {
            ModelKind::Stump | ModelKind::Cart => self.raw_score(x).clamp(0.0, 1.0),
            ModelKind::Gbm => sigmoid(self.raw_score(x)),
        }
    }

    /// Class decision: flaky iff probability exceeds one half.
    pub fn predict_class_row(&self, x: &[f64]) -> bool {
        self.predict_row(x) > 0.5
    }

    /// Weight applied to each tree's output in [`Self::raw_score`].
    pub fn tree_scale(&self) -> f64 {
        match self.kind {
            ModelKind::Gbm => self.learning_rate,
            _ => 1.0,
        }
    }

    /// Raw output that does not depend on any tree.
    pub fn raw_offset(&self) -> f64 {
        match self.kind {
            ModelKind::Gbm => self.initial_score,
            _ => 0.0,
        }
    }

    /// Split threshold of a stump.
    pub fn stump_threshold(&self) -> Option<f64> {
        match self.kind {
            ModelKind::Stump => self.trees.first().and_then(Tree::root_threshold),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelMetadata(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        match self.kind {
            ModelKind::Stump | ModelKind::Cart if self.trees.len() != 1 => {
                return Err(Error::ModelMetadata(format!(
                    "{} model needs exactly one tree, found {}",
                    self.kind,
                    self.trees.len()
                )))
            }
            ModelKind::Stump if self.trees[0].depth() != 1 => {
                return Err(Error::ModelMetadata("stump must have depth 1".into()))
            }
            _ => {}
        }
        for t in &self.trees {
            t.validate(self.schema.len())?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: TreeEnsembleModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}

/// Probability that `x` is flaky; `x` must carry the model's schema.
pub fn predict_proba(model: &TreeEnsembleModel, x: &FeatureVector, schema: &FeatureSchema) -> Result<f64> {
    if *schema != model.schema || x.values.len() != model.schema.len() {
        return Err(Error::SchemaMismatch(format!(
            "model expects {} features, vector has {}",
            model.schema.len(),
            x.values.len()
        )));
    }
    Ok(model.predict_row(&x.values))
}

fn check_inputs(x: &[Vec<f64>], y: &[bool], schema: &FeatureSchema) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Contract(format!("{} rows but {} labels", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Degenerate("need at least two samples".into()));
    }
    for (i, row) in x.iter().enumerate() {
        if row.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "row {i} has {} values, schema has {}",
                row.len(),
                schema.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("row {i} has a non-finite feature")));
        }
    }
    let pos = y.iter().filter(|&&l| l).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::Degenerate("labels contain a single class".into()));
    }
    Ok(())
}

/// Depth-1 threshold classifier minimizing weighted Gini impurity.
pub fn fit_stump(x: &[Vec<f64>], y: &[bool], schema: &FeatureSchema) -> Result<TreeEnsembleModel> {
    check_inputs(x, y, schema)?;
    let target = Target::Classes(y);
    let all: Vec<usize> = (0..x.len()).collect();
    let split = best_split(x, &target, &all)
        .ok_or_else(|| Error::Degenerate("no split candidate: all feature values equal".into()))?;
    let frac = |idx: &[usize]| idx.iter().filter(|&&i| y[i]).count() as f64 / idx.len() as f64;
    let tree = Tree {
        nodes: vec![
            Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: 1,
                right: 2,
                cover: x.len() as f64,
            },
            Node::Leaf {
                value: frac(&split.left),
                cover: split.left.len() as f64,
            },
            Node::Leaf {
                value: frac(&split.right),
                cover: split.right.len() as f64,
            },
        ],
    };
    Ok(TreeEnsembleModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: ModelKind::Stump,
        initial_score: 0.0,
        learning_rate: 1.0,
        schema: schema.clone(),
        trees: vec![tree],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartParams {
    pub max_depth: usize,
    /// Minimum samples a node needs to be split.
    pub min_leaf: usize,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams {
            max_depth: 3,
            min_leaf: 2,
        }
    }
}

/// Gini classification tree.
pub fn fit_cart(
    x: &[Vec<f64>],
    y: &[bool],
    schema: &FeatureSchema,
    params: CartParams,
) -> Result<TreeEnsembleModel> {
    check_inputs(x, y, schema)?;
    let tree = grow(
        x,
        &Target::Classes(y),
        &GrowParams {
            max_depth: params.max_depth,
            min_split: params.min_leaf,
        },
    );
    Ok(TreeEnsembleModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: ModelKind::Cart,
        initial_score: 0.0,
        learning_rate: 1.0,
        schema: schema.clone(),
        trees: vec![tree],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbmParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Minimum samples a node needs to be split.
    pub min_leaf: usize,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams {
            n_trees: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_leaf: 2,
        }
    }
}

/// Mean binary cross-entropy of log-odds `raw` against `y`.
pub fn log_loss(raw: &[f64], y: &[bool]) -> f64 {
    let total: f64 = raw
        .iter()
        .zip(y)
        .map(|(&z, &l)| {
            // log(1 + e^-z) for positives, log(1 + e^z) for negatives
            let s = if l { -z } else { z };
            if s > 0.0 {
                s + (-s).exp().ln_1p()
            } else {
                s.exp().ln_1p()
            }
        })
        .sum();
    total / raw.len() as f64
}

/// Gradient boosting on the logistic loss. Returns the model and the
/// training log-loss before the first tree and after every tree.
pub fn fit_gbm_traced(
    x: &[Vec<f64>],
    y: &[bool],
    schema: &FeatureSchema,
    params: GbmParams,
) -> Result<(TreeEnsembleModel, Vec<f64>)> {
    check_inputs(x, y, schema)?;
    if !(params.learning_rate > 0.0 && params.learning_rate.is_finite()) {
        return Err(Error::Config(format!("invalid learning rate {}", params.learning_rate)));
    }
    let pos = y.iter().filter(|&&l| l).count() as f64;
    let base_rate = pos / y.len() as f64;
    let initial_score = (base_rate / (1.0 - base_rate)).ln();

    let mut raw = vec![initial_score; x.len()];
    let mut trace = vec![log_loss(&raw, y)];
    let mut trees = Vec::with_capacity(params.n_trees);
    let grow_params = GrowParams {
        max_depth: params.max_depth,
        min_split: params.min_leaf,
    };
    let mut residual = vec![0.0; x.len()];
    let mut hessian = vec![0.0; x.len()];
    for _ in 0..params.n_trees {
        for i in 0..x.len() {
            let p = sigmoid(raw[i]);
            residual[i] = if y[i] { 1.0 - p } else { -p };
            hessian[i] = p * (1.0 - p);
        }
        let tree = grow(
            x,
            &Target::Newton {
                residual: &residual,
                hessian: &hessian,
            },
            &grow_params,
        );
        for (r, row) in raw.iter_mut().zip(x) {
            *r += params.learning_rate * tree.predict(row);
        }
        trace.push(log_loss(&raw, y));
        trees.push(tree);
    }

    Ok((
        TreeEnsembleModel {
            format_version: MODEL_FORMAT_VERSION,
            kind: ModelKind::Gbm,
            initial_score,
            learning_rate: params.learning_rate,
            schema: schema.clone(),
            trees,
        },
        trace,
    ))
}

pub fn fit_gbm(
    x: &[Vec<f64>],
    y: &[bool],
    schema: &FeatureSchema,
    params: GbmParams,
) -> Result<TreeEnsembleModel> {
    fit_gbm_traced(x, y, schema, params).map(|(m, _)| m)
}

/// Learner selection, serializable for run configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trainer {
    Stump,
    Cart(CartParams),
    Gbm(GbmParams),
}

impl Trainer {
    pub fn fit(&self, x: &[Vec<f64>], y: &[bool], schema: &FeatureSchema) -> Result<TreeEnsembleModel> {
        match *self {
            Trainer::Stump => fit_stump(x, y, schema),
            Trainer::Cart(p) => fit_cart(x, y, schema, p),
            Trainer::Gbm(p) => fit_gbm(x, y, schema, p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKey;
    use crate::history::Unit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn schema(n: usize) -> FeatureSchema {
        FeatureSchema::new((0..n).map(|i| FeatureKey::Project(format!("f{i}"))).collect()).unwrap()
    }

    fn col(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn stump_on_separable_values() {
        let m = fit_stump(&col(&[0.1, 0.2, 0.8, 0.9]), &[false, false, true, true], &schema(1)).unwrap();
        assert_eq!(m.stump_threshold(), Some(0.5));
        assert!(m.predict_class_row(&[0.95]));
        assert!(!m.predict_class_row(&[0.05]));
        m.validate().unwrap();
    }

    #[test]
    fn stump_degenerate_inputs() {
        let s = schema(1);
        assert!(matches!(fit_stump(&col(&[1.0, 1.0, 1.0]), &[true, false, true], &s), Err(Error::Degenerate(_))));
        assert!(matches!(fit_stump(&col(&[1.0, 2.0]), &[true, true], &s), Err(Error::Degenerate(_))));
    }

    #[test]
    fn stump_leaf_ties_go_to_non_flaky() {
        let m = fit_stump(&col(&[0.0, 1.0, 2.0, 3.0]), &[false, true, false, true], &schema(1)).unwrap();
        // left leaf holds one negative, right leaf 1 positive of 3 or a 50/50 split
        for v in [0.0, 1.0, 2.0, 3.0] {
            let p = m.predict_row(&[v]);
            assert_eq!(m.predict_class_row(&[v]), p > 0.5);
        }
    }

    #[test]
    fn cart_realizes_xor() {
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = [false, true, true, false];
        let m = fit_cart(&x, &y, &schema(2), CartParams { max_depth: 2, min_leaf: 2 }).unwrap();
        for (row, &l) in x.iter().zip(&y) {
            assert_eq!(m.predict_class_row(row), l);
        }
        m.trees[0].validate_cover().unwrap();
    }

    #[test]
    fn cart_zero_depth_and_pure_nodes() {
        let x = col(&[1.0, 2.0, 3.0, 4.0]);
        let m = fit_cart(&x, &[true, false, false, false], &schema(1), CartParams { max_depth: 0, min_leaf: 2 }).unwrap();
        assert_eq!(m.trees[0].nodes.len(), 1);
        assert_eq!(m.predict_row(&[9.0]), 0.25);

        let m = fit_cart(&x, &[true, true, false, false], &schema(1), CartParams { max_depth: 5, min_leaf: 2 }).unwrap();
        assert_eq!(m.trees[0].nodes.len(), 3);
    }

    #[test]
    fn gbm_prior_only() {
        let x = col(&[1.0, 2.0, 3.0, 4.0]);
        let m = fit_gbm(&x, &[true, false, true, false], &schema(1), GbmParams { n_trees: 0, ..Default::default() }).unwrap();
        assert_eq!(m.initial_score, 0.0);
        assert_eq!(m.predict_row(&[2.5]), 0.5);
        let m = fit_gbm(&x, &[true, false, false, false], &schema(1), GbmParams { n_trees: 0, ..Default::default() }).unwrap();
        assert!((m.predict_row(&[0.0]) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn gbm_loss_decreases_on_separable_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..60 {
            let pos = i % 2 == 0;
            let shift = if pos { 1.0 } else { -1.0 };
            x.push(vec![shift + rng.random_range(-0.5..0.5), shift + rng.random_range(-0.5..0.5)]);
            y.push(pos);
        }
        let (m, trace) = fit_gbm_traced(&x, &y, &schema(2), GbmParams { n_trees: 30, ..Default::default() }).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] < w[0], "{trace:?}");
        }
        assert!(x.iter().zip(&y).all(|(r, &l)| m.predict_class_row(r) == l));
    }

    #[test]
    fn gbm_rejects_non_finite() {
        let x = vec![vec![f64::NAN], vec![1.0]];
        assert!(matches!(fit_gbm(&x, &[true, false], &schema(1), GbmParams::default()), Err(Error::Contract(_))));
    }

    #[test]
    fn predict_proba_checks_schema() {
        let m = fit_stump(&col(&[0.0, 1.0]), &[false, true], &schema(1)).unwrap();
        let unit = Unit {
            unit_id: "u".into(),
            test_id: "t".into(),
            reference_time: 1,
            repo_id: "r".into(),
            label: None,
        };
        let v = FeatureVector { values: vec![1.0], unit: unit.clone() };
        assert_eq!(predict_proba(&m, &v, &schema(1)).unwrap(), 1.0);
        let v2 = FeatureVector { values: vec![1.0, 2.0], unit };
        assert!(matches!(predict_proba(&m, &v2, &schema(2)), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn model_json_round_trip() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0], vec![3.0, 1.0], vec![4.0, 5.0]];
        let y = [false, true, false, true, true];
        let m = fit_gbm(&x, &y, &schema(2), GbmParams { n_trees: 5, ..Default::default() }).unwrap();
        let text = m.to_json().unwrap();
        let back = TreeEnsembleModel::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn log_loss_matches_direct_formula() {
        let raw = [0.3, -1.2, 4.0];
        let y = [true, false, false];
        let direct: f64 = raw
            .iter()
            .zip(&y)
            .map(|(&z, &l)| {
                let p = sigmoid(z);
                if l { -p.ln() } else { -(1.0 - p).ln() }
            })
            .sum::<f64>()
            / 3.0;
        assert!((log_loss(&raw, &y) - direct).abs() < 1e-12);
    }
}
