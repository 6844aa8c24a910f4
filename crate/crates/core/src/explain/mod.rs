//! SHAP attributions for tree models, feature ranking and beeswarm export.

mod beeswarm;
mod treeshap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureKey, FeatureMatrix, FeatureSchema};
use crate::learner::{Node, Tree, TreeEnsembleModel};

pub use beeswarm::{beeswarm_svg, export_beeswarm, percentiles};

/// Largest feature count [`brute_force_shapley`] will enumerate.
pub const MAX_BRUTE_FORCE_FEATURES: usize = 12;

/// Per-unit, per-feature attributions on the model's raw output scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    /// Expected raw output over the training distribution.
    pub base_value: f64,
    pub unit_ids: Vec<String>,
    /// `matrix[unit][feature]`.
    pub matrix: Vec<Vec<f64>>,
    pub schema: FeatureSchema,
}

impl ShapExplanation {
    /// Largest violation of `base + sum(phi) = raw(x)` over all units.
    pub fn max_additivity_error(&self, model: &TreeEnsembleModel, rows: &[Vec<f64>]) -> f64 {
        self.matrix
            .iter()
            .zip(rows)
            .map(|(phi, x)| (self.base_value + phi.iter().sum::<f64>() - model.raw_score(x)).abs())
            .fold(0.0, f64::max)
    }

    /// Matrix as CSV: `unit_id` then one column per feature.
    pub fn matrix_csv(&self) -> String {
        let mut out = String::from("unit_id");
        for n in self.schema.names() {
            out.push(',');
            out.push_str(&n);
        }
        out.push('\n');
        for (id, row) in self.unit_ids.iter().zip(&self.matrix) {
            out.push_str(id);
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

fn check_cover(model: &TreeEnsembleModel) -> Result<()> {
    for t in &model.trees {
        t.validate_cover()?;
    }
    Ok(())
}

/// Exact path-dependent SHAP values for every row of `x`.
pub fn tree_shap(model: &TreeEnsembleModel, x: &FeatureMatrix) -> Result<ShapExplanation> {
    if x.schema != model.schema {
        return Err(Error::SchemaMismatch("feature matrix does not match the model schema".into()));
    }
    check_cover(model)?;
    let scale = model.tree_scale();
    let base_value = model.raw_offset()
        + scale * model.trees.iter().map(treeshap::expected_value).sum::<f64>();
    let m = model.schema.len();
    let matrix = x
        .rows
        .iter()
        .map(|row| {
            let mut phi = vec![0.0; m];
            for t in &model.trees {
                treeshap::tree_shap_into(t, row, &mut phi);
            }
            phi.iter_mut().for_each(|p| *p *= scale);
            phi
        })
        .collect();
    Ok(ShapExplanation {
        base_value,
        unit_ids: x.unit_ids.clone(),
        matrix,
        schema: model.schema.clone(),
    })
}

fn conditional_expectation(tree: &Tree, node: usize, x: &[f64], known: u32) -> f64 {
    match tree.nodes[node] {
        Node::Leaf { value, .. } => value,
        Node::Split {
            feature,
            threshold,
            left,
            right,
            cover,
        } => {
            if known & (1 << feature) != 0 {
                let next = if x[feature] <= threshold { left } else { right };
                conditional_expectation(tree, next, x, known)
            } else {
                (tree.nodes[left].cover() * conditional_expectation(tree, left, x, known)
                    + tree.nodes[right].cover() * conditional_expectation(tree, right, x, known))
                    / cover
            }
        }
    }
}

/// Shapley values by enumerating all `2^M` coalitions, where a
/// coalition's value is the model's cover-weighted expectation with the
/// coalition's features fixed to `x`.
pub fn brute_force_shapley(model: &TreeEnsembleModel, x: &[f64]) -> Result<Vec<f64>> {
    let m = model.schema.len();
    if m > MAX_BRUTE_FORCE_FEATURES {
        return Err(Error::Contract(format!(
            "brute-force Shapley limited to {MAX_BRUTE_FORCE_FEATURES} features, got {m}"
        )));
    }
    if x.len() != m {
        return Err(Error::SchemaMismatch(format!("input has {} values, model {m}", x.len())));
    }
    check_cover(model)?;
    let scale = model.tree_scale();
    let value: Vec<f64> = (0u32..1 << m)
        .map(|s| {
            model.raw_offset()
                + scale
                    * model
                        .trees
                        .iter()
                        .map(|t| conditional_expectation(t, 0, x, s))
                        .sum::<f64>()
        })
        .collect();

    let fact: Vec<f64> = (0..=m)
        .scan(1.0, |acc, i| {
            if i > 0 {
                *acc *= i as f64;
            }
            Some(*acc)
        })
        .collect();
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1u32 << i;
        for s in 0u32..1 << m {
            if s & bit != 0 {
                continue;
            }
            let size = s.count_ones() as usize;
            let w = fact[size] * fact[m - size - 1] / fact[m];
            *p += w * (value[(s | bit) as usize] - value[s as usize]);
        }
    }
    Ok(phi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub name: String,
    pub key: FeatureKey,
    pub mean_abs_shap: f64,
}

/// Features by descending mean |SHAP|; ties keep schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub entries: Vec<RankedFeature>,
}

impl FeatureRanking {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,feature,mean_abs_shap\n");
        for (i, e) in self.entries.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, e.name, e.mean_abs_shap));
        }
        out
    }
}

pub fn rank_features(e: &ShapExplanation) -> FeatureRanking {
    let n = e.matrix.len().max(1) as f64;
    let mut entries: Vec<RankedFeature> = e
        .schema
        .features()
        .iter()
        .enumerate()
        .map(|(f, key)| RankedFeature {
            name: key.to_string(),
            key: key.clone(),
            mean_abs_shap: e.matrix.iter().map(|row| row[f].abs()).sum::<f64>() / n,
        })
        .collect();
    // stable sort keeps schema order among ties
    entries.sort_by(|a, b| b.mean_abs_shap.total_cmp(&a.mean_abs_shap));
    FeatureRanking { entries }
}

/// The `k` best-ranked features as a sub-schema of `schema`, in schema
/// order.
pub fn select_top_k(r: &FeatureRanking, schema: &FeatureSchema, k: usize) -> Result<FeatureSchema> {
    if k == 0 || k > r.entries.len() {
        return Err(Error::Config(format!(
            "top-k must be in 1..={}, got {k}",
            r.entries.len()
        )));
    }
    let keep: Vec<FeatureKey> = r.entries[..k].iter().map(|e| e.key.clone()).collect();
    schema.subset(&keep)
}

/// Concatenates per-fold explanations into one, ordered like `order`.
/// Base values of folds differ; the mean is reported.
pub fn concat_explanations(parts: Vec<ShapExplanation>, order: &[String]) -> Result<ShapExplanation> {
    let schema = parts
        .first()
        .map(|p| p.schema.clone())
        .ok_or_else(|| Error::Contract("no explanations to concatenate".into()))?;
    let base_value = parts.iter().map(|p| p.base_value).sum::<f64>() / parts.len() as f64;
    let mut rows: std::collections::HashMap<String, Vec<f64>> = std::collections::HashMap::new();
    for p in parts {
        if p.schema != schema {
            return Err(Error::SchemaMismatch("fold explanations disagree on schema".into()));
        }
        for (id, row) in p.unit_ids.into_iter().zip(p.matrix) {
            rows.insert(id, row);
        }
    }
    let mut matrix = Vec::with_capacity(order.len());
    for id in order {
        matrix.push(
            rows.remove(id)
                .ok_or_else(|| Error::Contract(format!("no attribution for unit {id}")))?,
        );
    }
    Ok(ShapExplanation {
        base_value,
        unit_ids: order.to_vec(),
        matrix,
        schema,
    })
}
