//! Run configuration: defaults, overlaid by an optional JSON file, overlaid
//! by command-line flags.

use std::path::PathBuf;

use flakelens::learner::{CartParams, GbmParams};
use flakelens::{DecayKind, FeatureFlags, HistoryWindow, Preset, SynthConfig, Trainer};
use serde::{Deserialize, Serialize};

use crate::args::{Args, LearnerKind, Scenario};
use crate::error::CliError;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    /// Directory laid out like `synth` output; fills any input left unset.
    pub data: Option<PathBuf>,
    /// History files: JSONL, or JUnit XML when the extension is `.xml`.
    pub histories: Vec<PathBuf>,
    pub labels: Option<PathBuf>,
    pub pr: Option<PathBuf>,
    /// Churn TSV files; the repository id is the file stem.
    pub churn: Vec<PathBuf>,
    /// Feature matrix written by `extract` (CSV, or JSONL by extension).
    pub features: Option<PathBuf>,
    /// Schema for `features`; defaults to `schema.json` next to it.
    pub schema: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Inputs,
    pub features: FeatureFlags,
    pub window: HistoryWindow,
    /// Named feature set and learner; overrides `features` and `learner`.
    pub preset: Option<String>,
    pub learner: Trainer,
    pub k: usize,
    /// Fold assignment and synthetic generation seed.
    pub seed: u64,
    /// Features shown by `explain`; all when unset or larger.
    pub top_n: Option<usize>,
    pub baseline_window: usize,
    /// Timestamp for JUnit test cases whose suite carries none.
    pub junit_timestamp: Option<i64>,
    pub synth: SynthConfig,
    pub out: PathBuf,
    pub run_id: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: Inputs::default(),
            features: FeatureFlags::default(),
            window: HistoryWindow::default(),
            preset: None,
            learner: Trainer::Gbm(GbmParams::default()),
            k: DEFAULT_K,
            seed: DEFAULT_SEED,
            top_n: None,
            baseline_window: flakelens::baseline::DEFAULT_BASELINE_WINDOW,
            junit_timestamp: None,
            synth: SynthConfig::default(),
            out: PathBuf::from("runs"),
            run_id: None,
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RunConfig {
    /// Builds the effective config for one invocation.
    pub fn resolve(args: &Args) -> Result<RunConfig, CliError> {
        let mut cfg = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
                serde_json::from_str(&text).map_err(|e| CliError::input(path, e))?
            }
            None => RunConfig::default(),
        };
        cfg.apply(args)?;
        cfg.synth.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, a: &Args) -> Result<(), CliError> {
        let i = &mut self.inputs;
        set(&mut i.data, a.data.clone().map(Some));
        if !a.histories.is_empty() {
            i.histories = a.histories.clone();
        }
        if !a.churn.is_empty() {
            i.churn = a.churn.clone();
        }
        set(&mut i.labels, a.labels.clone().map(Some));
        set(&mut i.pr, a.pr.clone().map(Some));
        set(&mut i.features, a.features.clone().map(Some));
        set(&mut i.schema, a.schema.clone().map(Some));
        set(&mut i.model, a.model.clone().map(Some));

        set(&mut self.out, a.out.clone());
        set(&mut self.run_id, a.run_id.clone().map(Some));
        set(&mut self.seed, a.seed);
        set(&mut self.k, a.k);
        set(&mut self.top_n, a.top_n.map(Some));
        set(&mut self.baseline_window, a.baseline_window);
        set(&mut self.junit_timestamp, a.junit_timestamp.map(Some));
        set(&mut self.preset, a.preset.clone().map(Some));
        set(&mut self.window.max_age, a.max_age_days.map(|d| d * flakelens::history::SECONDS_PER_DAY));
        set(&mut self.window.max_count, a.max_count);
        if !a.decay.is_empty() {
            self.features.decay_kinds = a
                .decay
                .iter()
                .map(|s| s.parse::<DecayKind>())
                .collect::<flakelens::Result<_>>()?;
        }

        if let Some(kind) = a.learner {
            self.learner = match (kind, self.learner) {
                (LearnerKind::Stump, _) => Trainer::Stump,
                (LearnerKind::Cart, Trainer::Cart(p)) => Trainer::Cart(p),
                (LearnerKind::Cart, _) => Trainer::Cart(CartParams::default()),
                (LearnerKind::Gbm, Trainer::Gbm(p)) => Trainer::Gbm(p),
                (LearnerKind::Gbm, _) => Trainer::Gbm(GbmParams::default()),
            };
        }
        match &mut self.learner {
            Trainer::Stump => {}
            Trainer::Cart(p) => {
                set(&mut p.max_depth, a.max_depth);
                set(&mut p.min_leaf, a.min_leaf);
            }
            Trainer::Gbm(p) => {
                set(&mut p.n_trees, a.n_trees);
                set(&mut p.learning_rate, a.learning_rate);
                set(&mut p.max_depth, a.max_depth);
                set(&mut p.min_leaf, a.min_leaf);
            }
        }

        if let Some(scenario) = a.scenario {
            self.synth = match scenario {
                Scenario::Default => SynthConfig::default(),
                Scenario::RecentlyFixed => SynthConfig::recently_fixed(),
            };
        }
        set(&mut self.synth.n_flaky, a.n_flaky);
        set(&mut self.synth.n_nonflaky, a.n_nonflaky);
        set(&mut self.synth.history_length, a.history_length);
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        self.preset()?;
        if self.k < 2 {
            return Err(CliError::Other(format!("k must be at least 2, got {}", self.k)));
        }
        if self.baseline_window == 0 {
            return Err(CliError::Other("baseline_window must be positive".into()));
        }
        let i = &self.inputs;
        let paths = i
            .data
            .iter()
            .chain(&i.histories)
            .chain(&i.labels)
            .chain(&i.pr)
            .chain(&i.churn)
            .chain(&i.features)
            .chain(&i.schema)
            .chain(&i.model);
        for p in paths {
            if !p.exists() {
                return Err(CliError::input(p, "no such file or directory"));
            }
        }
        Ok(())
    }

    pub fn preset(&self) -> Result<Option<Preset>, CliError> {
        self.preset.as_deref().map(str::parse).transpose().map_err(CliError::from)
    }

    /// Feature groups requested, honoring the preset.
    pub fn flags(&self) -> Result<FeatureFlags, CliError> {
        Ok(match self.preset()? {
            Some(p) => p.flags(),
            None => self.features.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}
