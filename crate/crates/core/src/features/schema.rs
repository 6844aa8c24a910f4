use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::decay::DecayKind;
use crate::churn::{file_extension, ChurnLog};
use crate::error::{Error, Result};
use crate::history::{Unit, SECONDS_PER_DAY};

pub const DEFAULT_WINDOWS: [u32; 3] = [3, 14, 54];

/// One column of a feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKey {
    FlipRate(DecayKind),
    Entropy,
    MeanDuration,
    MeanDurationDiff,
    Churn { extension: String, window_days: u32 },
    Project(String),
    PrChangedFiles,
    PrContributors,
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKey::FlipRate(k) => write!(f, "flip_rate_{}", k.to_string().replace(':', "_")),
            FeatureKey::Entropy => f.write_str("entropy"),
            FeatureKey::MeanDuration => f.write_str("mean_duration"),
            FeatureKey::MeanDurationDiff => f.write_str("mean_duration_diff"),
            FeatureKey::Churn { extension, window_days } => {
                let ext = if extension.is_empty() { "(none)" } else { extension };
                write!(f, "{ext}_changes_{window_days}")
            }
            FeatureKey::Project(repo) => write!(f, "project_{repo}"),
            FeatureKey::PrChangedFiles => f.write_str("pr_changed_files"),
            FeatureKey::PrContributors => f.write_str("pr_contributors"),
        }
    }
}

/// Which feature groups to compute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureFlags {
    pub decay_kinds: Vec<DecayKind>,
    pub entropy: bool,
    pub mean_duration: bool,
    pub mean_duration_diff: bool,
    pub churn: bool,
    pub project: bool,
    pub pr: bool,
    pub churn_windows: Vec<u32>,
}

impl Default for FeatureFlags {
    fn default() -> Self {
        FeatureFlags::all(vec![DecayKind::ReciprocalSquared])
    }
}

impl FeatureFlags {
    /// Every group, with the given flip-rate decays.
    pub fn all(decay_kinds: Vec<DecayKind>) -> Self {
        FeatureFlags {
            decay_kinds,
            entropy: true,
            mean_duration: true,
            mean_duration_diff: true,
            churn: true,
            project: true,
            pr: true,
            churn_windows: DEFAULT_WINDOWS.to_vec(),
        }
    }

    /// Only test-outcome features.
    pub fn outcomes_only(decay_kinds: Vec<DecayKind>, entropy: bool) -> Self {
        FeatureFlags {
            decay_kinds,
            entropy,
            mean_duration: false,
            mean_duration_diff: false,
            churn: false,
            project: false,
            pr: false,
            churn_windows: DEFAULT_WINDOWS.to_vec(),
        }
    }

    /// Churn-related groups (per-extension counts, project, PR) all on.
    pub fn code_churn(&self) -> bool {
        self.churn && self.project && self.pr
    }

    pub fn max_window_days(&self) -> u32 {
        self.churn_windows.iter().copied().max().unwrap_or(0)
    }
}

/// Ordered, named feature columns.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "SchemaDoc", try_from = "SchemaDoc")]
pub struct FeatureSchema {
    features: Vec<FeatureKey>,
}

#[derive(Serialize, Deserialize)]
struct SchemaDoc {
    names: Vec<String>,
    extension_vocabulary: Vec<String>,
    project_vocabulary: Vec<String>,
    features: Vec<FeatureKey>,
}

impl From<FeatureSchema> for SchemaDoc {
    fn from(s: FeatureSchema) -> Self {
        SchemaDoc {
            names: s.names(),
            extension_vocabulary: s.extension_vocabulary(),
            project_vocabulary: s.project_vocabulary(),
            features: s.features,
        }
    }
}

impl TryFrom<SchemaDoc> for FeatureSchema {
    type Error = Error;

    fn try_from(doc: SchemaDoc) -> Result<Self> {
        let schema = FeatureSchema::new(doc.features)?;
        if schema.names() != doc.names {
            return Err(Error::SchemaMismatch(
                "schema names disagree with feature definitions".into(),
            ));
        }
        Ok(schema)
    }
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureKey>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for f in &features {
            if !seen.insert(f.to_string()) {
                return Err(Error::SchemaMismatch(format!("duplicate feature name {f}")));
            }
        }
        Ok(FeatureSchema { features })
    }

    pub fn features(&self) -> &[FeatureKey] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(ToString::to_string).collect()
    }

    pub fn extension_vocabulary(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for f in &self.features {
            if let FeatureKey::Churn { extension, .. } = f {
                if !out.contains(extension) {
                    out.push(extension.clone());
                }
            }
        }
        out
    }

    pub fn project_vocabulary(&self) -> Vec<String> {
        self.features
            .iter()
            .filter_map(|f| match f {
                FeatureKey::Project(r) => Some(r.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn index_of(&self, key: &FeatureKey) -> Option<usize> {
        self.features.iter().position(|f| f == key)
    }

    pub fn index_of_name(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.to_string() == name)
    }

    /// Sub-schema with the given features, kept in this schema's order.
    pub fn subset(&self, keep: &[FeatureKey]) -> Result<FeatureSchema> {
        for k in keep {
            if self.index_of(k).is_none() {
                return Err(Error::SchemaMismatch(format!("feature {k} not in schema")));
            }
        }
        Ok(FeatureSchema {
            features: self
                .features
                .iter()
                .filter(|f| keep.contains(f))
                .cloned()
                .collect(),
        })
    }

    /// Column positions of `other`'s features in this schema.
    pub fn projection(&self, other: &FeatureSchema) -> Result<Vec<usize>> {
        other
            .features
            .iter()
            .map(|k| {
                self.index_of(k)
                    .ok_or_else(|| Error::SchemaMismatch(format!("feature {k} not available")))
            })
            .collect()
    }
}

/// Builds the feature schema for a training population. Vocabularies are
/// taken from the data: every extension touched inside any unit's widest
/// churn window and every repository a unit belongs to.
pub fn build_schema(
    units: &[Unit],
    logs: &BTreeMap<String, ChurnLog>,
    flags: &FeatureFlags,
) -> Result<FeatureSchema> {
    if units.is_empty() {
        return Err(Error::Contract("cannot build a schema from zero units".into()));
    }
    let mut features = Vec::new();
    for &k in &flags.decay_kinds {
        features.push(FeatureKey::FlipRate(k));
    }
    if flags.entropy {
        features.push(FeatureKey::Entropy);
    }
    if flags.mean_duration {
        features.push(FeatureKey::MeanDuration);
    }
    if flags.mean_duration_diff {
        features.push(FeatureKey::MeanDurationDiff);
    }
    if flags.churn && !flags.churn_windows.is_empty() {
        let span = flags.max_window_days() as i64 * SECONDS_PER_DAY;
        let mut extensions = BTreeSet::new();
        for u in units {
            if let Some(log) = logs.get(&u.repo_id) {
                for c in log.between(u.reference_time - span, u.reference_time) {
                    extensions.extend(c.changed_paths.iter().map(|p| file_extension(p)));
                }
            }
        }
        for ext in extensions {
            for &days in &flags.churn_windows {
                features.push(FeatureKey::Churn {
                    extension: ext.clone(),
                    window_days: days,
                });
            }
        }
    }
    if flags.project {
        let repos: BTreeSet<&str> = units.iter().map(|u| u.repo_id.as_str()).collect();
        features.extend(repos.into_iter().map(|r| FeatureKey::Project(r.to_string())));
    }
    if flags.pr {
        features.push(FeatureKey::PrChangedFiles);
        features.push(FeatureKey::PrContributors);
    }
    FeatureSchema::new(features)
}
