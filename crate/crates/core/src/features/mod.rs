//! Feature extraction from test histories and churn logs.

mod decay;
mod history_features;
mod matrix;
mod schema;

use std::collections::BTreeMap;

use crate::churn::{file_extension, ChurnLog, PullRequestInfo};
use crate::error::{Error, Result};
use crate::history::{TestHistory, Timestamp, Unit, SECONDS_PER_DAY};

pub use decay::{decay_weight, DecayKind, DEFAULT_EWMA_LAMBDA};
pub use history_features::{entropy, flip_rate, flip_rate_of, mean_duration, mean_duration_diff};
pub use matrix::{FeatureMatrix, FeatureVector};
pub use schema::{build_schema, FeatureFlags, FeatureKey, FeatureSchema, DEFAULT_WINDOWS};

/// Number of file-change events per extension in the `window_days` days
/// up to and including `reference_time`. Every vocabulary entry is present
/// in the result; other extensions are ignored.
pub fn churn_window_counts(
    log: &ChurnLog,
    reference_time: Timestamp,
    window_days: u32,
    vocabulary: &[String],
) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> =
        vocabulary.iter().map(|e| (e.clone(), 0)).collect();
    let from = reference_time - window_days as i64 * SECONDS_PER_DAY;
    for c in log.between(from, reference_time) {
        for p in &c.changed_paths {
            if let Some(n) = counts.get_mut(&file_extension(p)) {
                *n += 1;
            }
        }
    }
    counts
}

/// Computes one unit's feature vector in schema order.
///
/// `history` must already be normalized and windowed to the unit's
/// reference time. A missing log yields zero churn counts. A history
/// lacking either passing or failing runs gets a duration diff of 0.
pub fn featurize(
    unit: &Unit,
    history: &TestHistory,
    log: Option<&ChurnLog>,
    pr: PullRequestInfo,
    schema: &FeatureSchema,
) -> Result<FeatureVector> {
    let mut churn_cache: BTreeMap<u32, BTreeMap<String, usize>> = BTreeMap::new();
    let vocabulary = schema.extension_vocabulary();
    let mut values = Vec::with_capacity(schema.len());
    for key in schema.features() {
        let v = match key {
            FeatureKey::FlipRate(kind) => flip_rate(history, *kind)?,
            FeatureKey::Entropy => entropy(history)?,
            FeatureKey::MeanDuration => mean_duration(history)?,
            FeatureKey::MeanDurationDiff => mean_duration_diff(history).unwrap_or(0.0),
            FeatureKey::Churn {
                extension,
                window_days,
            } => {
                let counts = churn_cache.entry(*window_days).or_insert_with(|| match log {
                    Some(log) => {
                        churn_window_counts(log, unit.reference_time, *window_days, &vocabulary)
                    }
                    None => BTreeMap::new(),
                });
                counts.get(extension).copied().unwrap_or(0) as f64
            }
            FeatureKey::Project(repo) => {
                if *repo == unit.repo_id {
                    1.0
                } else {
                    0.0
                }
            }
            FeatureKey::PrChangedFiles => pr.changed_file_count as f64,
            FeatureKey::PrContributors => pr.contributor_count as f64,
        };
        if !v.is_finite() {
            return Err(Error::Contract(format!(
                "feature {key} is not finite for unit {}",
                unit.unit_id
            )));
        }
        values.push(v);
    }
    Ok(FeatureVector {
        values,
        unit: unit.clone(),
    })
}
