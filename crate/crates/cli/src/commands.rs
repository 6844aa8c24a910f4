use std::collections::BTreeMap;
use std::fmt::Write as _;

use flakelens::baseline::baseline_classify;
use flakelens::dataset::{write_labels_csv, write_pr_jsonl};
use flakelens::explain::{beeswarm_svg, export_beeswarm};
use flakelens::history::write_history_jsonl;
use flakelens::learner::Confusion;
use flakelens::synth::{cross_validate_explained, preset_matrix, run_preset_on};
use flakelens::{generate, rank_features, tree_shap, Diagnostic, FeatureMatrix, TreeEnsembleModel};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::inputs::{feature_matrix, labeled, load_dataset, load_model};

/// Files a command produces, relative to the run directory, plus a
/// human-readable summary for stdout.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: String,
}

impl Artifacts {
    fn add(&mut self, name: impl Into<String>, contents: impl Into<Vec<u8>>) {
        self.files.push((name.into(), contents.into()));
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn diagnostics_csv(diagnostics: &[Diagnostic]) -> String {
    let mut out = String::from("unit_id,message\n");
    for d in diagnostics {
        let _ = writeln!(out, "{},{}", csv_field(&d.unit_id), csv_field(&d.message));
    }
    out
}

fn json(value: &impl Serialize) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Other(e.to_string()))
}

pub fn extract(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let dataset = load_dataset(cfg)?;
    let (m, diagnostics) = dataset.extract(&cfg.flags()?, cfg.window)?;
    let mut a = Artifacts::default();
    a.add("features.csv", m.to_csv()?);
    a.add("features.jsonl", m.to_jsonl()?);
    a.add("schema.json", json(&m.schema)?);
    a.add("diagnostics.csv", diagnostics_csv(&diagnostics));
    a.summary = format!(
        "extracted {} units x {} features, {} diagnostics",
        m.len(),
        m.schema.len(),
        diagnostics.len()
    );
    Ok(a)
}

pub fn train(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let (m, _) = feature_matrix(cfg, None)?;
    let m = labeled(&m);
    let (data, trainer) = match cfg.preset()? {
        Some(p) => (preset_matrix(&m, p, cfg.k, cfg.seed)?, p.trainer()),
        None => (m, cfg.learner),
    };
    let y = data.required_labels()?;
    let model = trainer.fit(&data.rows, &y, &data.schema)?;
    let mut a = Artifacts::default();
    a.add("model.json", model.to_json()?);
    a.summary = format!(
        "trained {:?} model with {} trees on {} units x {} features ({})",
        model.kind,
        model.trees.len(),
        data.len(),
        data.schema.len(),
        data.schema.names().join(", ")
    );
    Ok(a)
}

pub fn evaluate(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let (m, _) = feature_matrix(cfg, None)?;
    let m = labeled(&m);
    let exp = match cfg.preset()? {
        Some(p) => run_preset_on(&m, p, cfg.k, cfg.seed)?,
        None => cross_validate_explained(&m, &cfg.learner, cfg.k, cfg.seed)?,
    };
    let table = exp.report.to_table();
    let mut a = Artifacts::default();
    a.add("report.json", exp.report.to_json()?);
    a.add("report.txt", table.clone());
    a.add("ranking.csv", rank_features(&exp.explanation).to_csv());
    a.add("shap.csv", exp.explanation.matrix_csv());
    a.summary = format!(
        "features: {}\n{table}mean F1: {:.4}",
        exp.matrix.schema.names().join(", "),
        exp.report.mean_f1
    );
    Ok(a)
}

/// Features for `model`, failing with a schema error when a column it
/// needs is absent.
fn model_features(cfg: &RunConfig, model: &TreeEnsembleModel) -> Result<(FeatureMatrix, Vec<Diagnostic>), CliError> {
    let (m, diagnostics) = feature_matrix(cfg, Some(&model.schema))?;
    let m = m
        .project(&model.schema)
        .map_err(|e| CliError::Schema(format!("features do not fit the model ({e})")))?;
    Ok((m, diagnostics))
}

pub fn predict(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let model = load_model(cfg)?;
    let (m, diagnostics) = model_features(cfg, &model)?;
    let mut out = String::from("unit_id,probability,class\n");
    let mut flagged = 0;
    for (id, row) in m.unit_ids.iter().zip(&m.rows) {
        let p = model.predict_row(row);
        let flaky = model.predict_class_row(row);
        flagged += usize::from(flaky);
        let class = if flaky { "flaky" } else { "non-flaky" };
        let _ = writeln!(out, "{},{p},{class}", csv_field(id));
    }
    let mut a = Artifacts::default();
    a.add("predictions.csv", out);
    a.add("diagnostics.csv", diagnostics_csv(&diagnostics));
    a.summary = format!("scored {} units, {flagged} predicted flaky", m.len());
    Ok(a)
}

pub fn explain(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let model = load_model(cfg)?;
    let (m, _) = model_features(cfg, &model)?;
    let e = tree_shap(&model, &m)?;
    let ranking = rank_features(&e);
    let top_n = cfg.top_n.unwrap_or(usize::MAX).min(m.schema.len());
    let mut swarm = Vec::new();
    export_beeswarm(&e, &m, top_n, &mut swarm)?;
    let mut a = Artifacts::default();
    a.add("shap.csv", e.matrix_csv());
    a.add("explanation.json", json(&e)?);
    a.add("ranking.csv", ranking.to_csv());
    a.add("beeswarm.csv", swarm);
    a.add("beeswarm.svg", beeswarm_svg(&e, &m, top_n)?);
    let mut summary = format!("explained {} units; base value {:.6}\n", m.len(), e.base_value);
    for (i, r) in ranking.entries.iter().take(top_n).enumerate() {
        let _ = writeln!(summary, "{:>3}. {} {:.6}", i + 1, r.name, r.mean_abs_shap);
    }
    a.summary = summary.trim_end().to_string();
    Ok(a)
}

#[derive(Serialize)]
struct BaselineReport {
    window: usize,
    precision: f64,
    recall: f64,
    f1: f64,
    confusion: Confusion,
}

pub fn baseline(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let dataset = load_dataset(cfg)?;
    let mut out = String::from("unit_id,test_id,verdict,flaky,label\n");
    let mut diagnostics = Vec::new();
    let (mut predicted, mut actual) = (Vec::new(), Vec::new());
    for u in &dataset.units {
        let history = dataset
            .histories
            .get(&u.test_id)
            .map(|h| h.window(u.reference_time, cfg.window.max_age, cfg.window.max_count));
        let verdict = match history.filter(|h| !h.is_empty()) {
            Some(h) => baseline_classify(&h, cfg.baseline_window)?,
            None => {
                diagnostics.push(Diagnostic {
                    unit_id: u.unit_id.clone(),
                    message: "insufficient history".into(),
                });
                continue;
            }
        };
        let flaky = verdict == flakelens::BaselineVerdict::Flaky;
        let label = match u.label {
            Some(l) => {
                predicted.push(flaky);
                actual.push(l);
                u8::from(l).to_string()
            }
            None => String::new(),
        };
        let _ = writeln!(
            out,
            "{},{},{verdict},{},{label}",
            csv_field(&u.unit_id),
            csv_field(&u.test_id),
            u8::from(flaky)
        );
    }
    let mut a = Artifacts::default();
    a.add("verdicts.csv", out);
    a.add("diagnostics.csv", diagnostics_csv(&diagnostics));
    a.summary = format!("classified {} units", dataset.units.len() - diagnostics.len());
    if !actual.is_empty() {
        let c = Confusion::from_predictions(&predicted, &actual);
        let report = BaselineReport {
            window: cfg.baseline_window,
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            confusion: c,
        };
        let _ = write!(
            a.summary,
            "\nprecision {:.4} recall {:.4} F1 {:.4}",
            report.precision, report.recall, report.f1
        );
        a.add("baseline_report.json", json(&report)?);
    }
    Ok(a)
}

#[derive(Serialize)]
struct MechanismLine<'a> {
    unit_id: &'a str,
    mechanism: &'a flakelens::synth::Mechanism,
}

pub fn synth(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let s = generate(&cfg.synth)?;
    let d = &s.dataset;
    let records: Vec<_> = d.histories.values().flat_map(|h| h.records().iter().cloned()).collect();
    let mut a = Artifacts::default();
    a.add("histories.jsonl", write_history_jsonl(&records));
    a.add("labels.csv", write_labels_csv(&d.units)?);
    a.add("pr.jsonl", write_pr_jsonl(&d.pr)?);
    for (repo, log) in &d.logs {
        a.add(format!("churn/{repo}.tsv"), log.to_tsv());
    }
    let mut mech = String::new();
    for (u, m) in d.units.iter().zip(&s.mechanisms) {
        let line = MechanismLine {
            unit_id: &u.unit_id,
            mechanism: m,
        };
        mech.push_str(&serde_json::to_string(&line).map_err(|e| CliError::Other(e.to_string()))?);
        mech.push('\n');
    }
    a.add("mechanisms.jsonl", mech);
    let flaky = d.units.iter().filter(|u| u.label == Some(true)).count();
    let by_repo: BTreeMap<&str, usize> = d.logs.iter().map(|(r, l)| (r.as_str(), l.commits().len())).collect();
    a.summary = format!(
        "generated {} units ({flaky} flaky), {} executions, commits per repo {by_repo:?}",
        d.units.len(),
        records.len()
    );
    Ok(a)
}
