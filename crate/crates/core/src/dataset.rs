//! A labeled population of units with everything needed to featurize it,
//! plus the labels CSV and PR JSONL formats.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::churn::{ChurnLog, PullRequestInfo};
use crate::error::{Error, Result};
use crate::features::{build_schema, featurize, FeatureFlags, FeatureMatrix, FeatureSchema};
use crate::history::{
    write_history_jsonl, ExecutionRecord, TestHistory, Timestamp, Unit, DEFAULT_MAX_AGE, DEFAULT_MAX_COUNT,
};

/// History window applied to each unit before featurization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HistoryWindow {
    /// Seconds before the reference time.
    pub max_age: i64,
    pub max_count: usize,
}

impl Default for HistoryWindow {
    fn default() -> Self {
        HistoryWindow {
            max_age: DEFAULT_MAX_AGE,
            max_count: DEFAULT_MAX_COUNT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub units: Vec<Unit>,
    /// Raw histories by test id.
    pub histories: BTreeMap<String, TestHistory>,
    /// Churn logs by repository id.
    pub logs: BTreeMap<String, ChurnLog>,
    /// PR metadata by unit id; absent units get zero counts.
    pub pr: BTreeMap<String, PullRequestInfo>,
}

/// A unit that could not be featurized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub unit_id: String,
    pub message: String,
}

impl Dataset {
    pub fn new(
        units: Vec<Unit>,
        records: Vec<ExecutionRecord>,
        logs: Vec<ChurnLog>,
        pr: BTreeMap<String, PullRequestInfo>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for u in &units {
            if !seen.insert(u.unit_id.as_str()) {
                return Err(Error::Contract(format!("duplicate unit id {}", u.unit_id)));
            }
        }
        Ok(Dataset {
            units,
            histories: TestHistory::group(records),
            logs: logs.into_iter().map(|l| (l.repo_id.clone(), l)).collect(),
            pr,
        })
    }

    /// The unit's history, normalized and then windowed at its reference
    /// time. Unknown tests yield an empty history.
    pub fn unit_history(&self, unit: &Unit, window: HistoryWindow) -> TestHistory {
        match self.histories.get(&unit.test_id) {
            Some(h) => h.normalize().window(unit.reference_time, window.max_age, window.max_count),
            None => TestHistory::new(unit.test_id.clone(), Vec::new()),
        }
    }

    pub fn schema(&self, flags: &FeatureFlags) -> Result<FeatureSchema> {
        build_schema(&self.units, &self.logs, flags)
    }

    /// Featurizes every unit under `schema`. Units with too little history
    /// are reported as diagnostics instead of failing the whole run.
    pub fn featurize_with(
        &self,
        schema: &FeatureSchema,
        window: HistoryWindow,
    ) -> Result<(FeatureMatrix, Vec<Diagnostic>)> {
        let mut matrix = FeatureMatrix::new(schema.clone());
        let mut diagnostics = Vec::new();
        for unit in &self.units {
            let history = self.unit_history(unit, window);
            let pr = self.pr.get(&unit.unit_id).copied().unwrap_or_default();
            match featurize(unit, &history, self.logs.get(&unit.repo_id), pr, schema) {
                Ok(v) => matrix.push(v)?,
                Err(Error::InsufficientHistory(_)) => diagnostics.push(Diagnostic {
                    unit_id: unit.unit_id.clone(),
                    message: "insufficient history".into(),
                }),
                Err(e) => return Err(e),
            }
        }
        Ok((matrix, diagnostics))
    }

    /// Builds the schema from this population and featurizes it.
    pub fn extract(&self, flags: &FeatureFlags, window: HistoryWindow) -> Result<(FeatureMatrix, Vec<Diagnostic>)> {
        self.featurize_with(&self.schema(flags)?, window)
    }

    /// Writes `histories.jsonl`, `labels.csv`, `pr.jsonl` and
    /// `churn/<repo>.tsv` under `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("churn"))?;
        let records: Vec<ExecutionRecord> = self
            .histories
            .values()
            .flat_map(|h| h.records().iter().cloned())
            .collect();
        fs::write(dir.join("histories.jsonl"), write_history_jsonl(&records))?;
        fs::write(dir.join("labels.csv"), write_labels_csv(&self.units)?)?;
        fs::write(dir.join("pr.jsonl"), write_pr_jsonl(&self.pr)?)?;
        for (repo, log) in &self.logs {
            fs::write(dir.join("churn").join(format!("{repo}.tsv")), log.to_tsv())?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    unit_id: String,
    test_id: String,
    reference_time: Timestamp,
    label: String,
    #[serde(default)]
    repo_id: Option<String>,
}

/// Repository assigned to units whose labels row has no `repo_id`.
pub const DEFAULT_REPO_ID: &str = "default";

fn parse_label(s: &str) -> Option<Option<bool>> {
    match s.trim().to_ascii_lowercase().as_str() {
        "" => Some(None),
        "1" | "true" | "flaky" => Some(Some(true)),
        "0" | "false" | "non-flaky" | "nonflaky" => Some(Some(false)),
        _ => None,
    }
}

/// Parses `unit_id,test_id,reference_time,label[,repo_id]`. Labels are
/// `1`/`0` (also `true`/`false`, `flaky`/`non-flaky`); empty means
/// unlabeled.
pub fn parse_labels_csv(text: &str) -> Result<Vec<Unit>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut units = Vec::new();
    for row in reader.deserialize::<LabelRow>() {
        let row = row.map_err(|e| Error::Format {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: format!("invalid labels row ({e})"),
        })?;
        let label = parse_label(&row.label).ok_or_else(|| {
            Error::InvalidRecord {
                name: row.unit_id.clone(),
                message: format!("unknown label {:?}", row.label),
            }
        })?;
        units.push(Unit {
            unit_id: row.unit_id,
            test_id: row.test_id,
            reference_time: row.reference_time,
            repo_id: row.repo_id.filter(|r| !r.is_empty()).unwrap_or_else(|| DEFAULT_REPO_ID.into()),
            label,
        });
    }
    Ok(units)
}

pub fn write_labels_csv(units: &[Unit]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for u in units {
        w.serialize(LabelRow {
            unit_id: u.unit_id.clone(),
            test_id: u.test_id.clone(),
            reference_time: u.reference_time,
            label: match u.label {
                Some(true) => "1".into(),
                Some(false) => "0".into(),
                None => String::new(),
            },
            repo_id: Some(u.repo_id.clone()),
        })
        .map_err(|e| Error::Contract(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Serialize, Deserialize)]
struct PrLine {
    unit_id: String,
    #[serde(flatten)]
    info: PullRequestInfo,
}

/// One `{"unit_id", "changed_file_count", "contributor_count"}` object
/// per line.
pub fn parse_pr_jsonl(text: &str) -> Result<BTreeMap<String, PullRequestInfo>> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: PrLine = serde_json::from_str(raw).map_err(|e| Error::Format {
            line: idx + 1,
            message: format!("invalid PR record ({e})"),
        })?;
        if out.insert(line.unit_id.clone(), line.info).is_some() {
            return Err(Error::Format {
                line: idx + 1,
                message: format!("duplicate unit id {}", line.unit_id),
            });
        }
    }
    Ok(out)
}

pub fn write_pr_jsonl(pr: &BTreeMap<String, PullRequestInfo>) -> Result<String> {
    let mut out = String::new();
    for (unit_id, &info) in pr {
        out.push_str(&serde_json::to_string(&PrLine {
            unit_id: unit_id.clone(),
            info,
        })?);
        out.push('\n');
    }
    Ok(out)
}
