//! Reading input files named by the run config.

use std::fs;
use std::path::{Path, PathBuf};

use flakelens::churn::parse_churn_tsv;
use flakelens::dataset::{parse_labels_csv, parse_pr_jsonl};
use flakelens::history::{parse_history_jsonl, parse_junit_report};
use flakelens::{Dataset, Diagnostic, FeatureMatrix, FeatureSchema, TreeEnsembleModel};

use crate::config::{Inputs, RunConfig};
use crate::error::CliError;

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(path, e))
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// Inputs with the `data` directory's files filled in where unset.
fn expand(inputs: &Inputs) -> Result<Inputs, CliError> {
    let mut i = inputs.clone();
    let Some(dir) = &inputs.data else {
        return Ok(i);
    };
    if i.histories.is_empty() {
        i.histories.push(dir.join("histories.jsonl"));
    }
    if i.labels.is_none() {
        i.labels = Some(dir.join("labels.csv"));
    }
    let pr = dir.join("pr.jsonl");
    if i.pr.is_none() && pr.exists() {
        i.pr = Some(pr);
    }
    let churn_dir = dir.join("churn");
    if i.churn.is_empty() && churn_dir.is_dir() {
        let mut found: Vec<PathBuf> = fs::read_dir(&churn_dir)
            .map_err(|e| CliError::input(&churn_dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| has_extension(p, "tsv"))
            .collect();
        found.sort();
        i.churn = found;
    }
    Ok(i)
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let inputs = expand(&cfg.inputs)?;
    if inputs.histories.is_empty() {
        return Err(CliError::Other("no history input; pass --histories or --data".into()));
    }
    let labels_path = inputs
        .labels
        .as_ref()
        .ok_or_else(|| CliError::Other("no labels input; pass --labels or --data".into()))?;

    let mut records = Vec::new();
    for path in &inputs.histories {
        let parsed = if has_extension(path, "xml") {
            let bytes = fs::read(path).map_err(|e| CliError::input(path, e))?;
            parse_junit_report(&bytes, cfg.junit_timestamp.unwrap_or(0))
        } else {
            parse_history_jsonl(&read_text(path)?)
        };
        records.extend(parsed.map_err(|e| CliError::reading(path, e))?);
    }
    let units = parse_labels_csv(&read_text(labels_path)?).map_err(|e| CliError::reading(labels_path, e))?;
    let pr = match &inputs.pr {
        Some(path) => parse_pr_jsonl(&read_text(path)?).map_err(|e| CliError::reading(path, e))?,
        None => Default::default(),
    };
    let mut logs = Vec::new();
    for path in &inputs.churn {
        let repo = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        logs.push(parse_churn_tsv(&repo, &read_text(path)?).map_err(|e| CliError::reading(path, e))?);
    }
    Ok(Dataset::new(units, records, logs, pr)?)
}

/// Reads the feature matrix named by `inputs.features`, if any.
pub fn load_features(cfg: &RunConfig) -> Result<Option<FeatureMatrix>, CliError> {
    let Some(path) = &cfg.inputs.features else {
        return Ok(None);
    };
    let schema_path = cfg
        .inputs
        .schema
        .clone()
        .unwrap_or_else(|| path.with_file_name("schema.json"));
    let schema: FeatureSchema =
        serde_json::from_str(&read_text(&schema_path)?).map_err(|e| CliError::input(&schema_path, e))?;
    let text = read_text(path)?;
    let matrix = if has_extension(path, "jsonl") {
        FeatureMatrix::from_jsonl(schema, &text)
    } else {
        FeatureMatrix::from_csv(schema, &text)
    };
    matrix.map(Some).map_err(|e| CliError::reading(path, e))
}

/// Features from `inputs.features` when given, otherwise extracted from
/// the raw inputs with `schema` or, failing that, the configured flags.
pub fn feature_matrix(
    cfg: &RunConfig,
    schema: Option<&FeatureSchema>,
) -> Result<(FeatureMatrix, Vec<Diagnostic>), CliError> {
    if let Some(m) = load_features(cfg)? {
        return Ok((m, Vec::new()));
    }
    let dataset = load_dataset(cfg)?;
    let schema = match schema {
        Some(s) => s.clone(),
        None => dataset.schema(&cfg.flags()?)?,
    };
    Ok(dataset.featurize_with(&schema, cfg.window)?)
}

pub fn load_model(cfg: &RunConfig) -> Result<TreeEnsembleModel, CliError> {
    let path = cfg
        .inputs
        .model
        .as_ref()
        .ok_or_else(|| CliError::Other("no model input; pass --model".into()))?;
    TreeEnsembleModel::from_json(&read_text(path)?).map_err(|e| CliError::reading(path, e))
}

/// Keeps the labeled rows only.
pub fn labeled(m: &FeatureMatrix) -> FeatureMatrix {
    let idx: Vec<usize> = (0..m.len()).filter(|&i| m.labels[i].is_some()).collect();
    m.select_rows(&idx)
}
