//! Seeded generator of CI histories, churn logs and exact labels, and the
//! predefined feature-set experiments run on top of it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::churn::{pull_request_info, ChurnLog, CommitRecord};
use crate::dataset::{Dataset, HistoryWindow};
use crate::error::{Error, Result};
use crate::explain::{concat_explanations, rank_features, select_top_k, tree_shap, ShapExplanation};
use crate::features::{DecayKind, FeatureFlags, FeatureKey, FeatureMatrix, FeatureSchema, DEFAULT_EWMA_LAMBDA};
use crate::history::{ExecutionRecord, TestOutcome, Timestamp, Unit, SECONDS_PER_DAY};
use crate::learner::{cross_validate, CrossValidation, EvaluationReport, GbmParams, Trainer};

/// Per-run durations in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DurationModel {
    /// Median passing duration; each unit scales it log-normally.
    pub pass_mean: f64,
    /// Early assertion or crash failures.
    pub fail_mean: f64,
    /// Failures that run into a timeout.
    pub timeout_mean: f64,
    pub noise_sd: f64,
}

impl Default for DurationModel {
    fn default() -> Self {
        DurationModel {
            pass_mean: 30.0,
            fail_mean: 5.0,
            timeout_mean: 120.0,
            noise_sd: 2.0,
        }
    }
}

/// Size of the pull request under test at each unit's reference time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrSizeModel {
    /// Mean changed files of an ordinary PR.
    pub small_files_mean: f64,
    /// Mean changed files of a PR that introduced a regression.
    pub large_files_mean: f64,
    /// Mean extra contributors of a regression PR beyond the first.
    pub large_extra_authors_mean: f64,
}

impl Default for PrSizeModel {
    fn default() -> Self {
        PrSizeModel {
            small_files_mean: 3.0,
            large_files_mean: 24.0,
            large_extra_authors_mean: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_flaky: usize,
    pub n_nonflaky: usize,
    /// Executions per unit before normalization.
    pub history_length: usize,
    pub flaky_failure_prob: f64,
    /// Regression units get between 1 and this many failing segments.
    pub regression_segments: usize,
    pub regression_mean_length: f64,
    /// The latest regression segment ends at most this many runs before
    /// the reference time.
    pub recent_regression_span: usize,
    /// Share of non-flaky units that always pass or always fail.
    pub typical_share: f64,
    /// Share of flaky units whose failures are timeouts.
    pub timeout_share: f64,
    /// Share of flaky failures reported as a flaky verdict (rerun passed).
    pub flaky_verdict_share: f64,
    /// Share of passes served from cache.
    pub cached_share: f64,
    /// Share of the remaining non-flaky units that were flaky and got
    /// fixed; the rest have regressions.
    pub fixed_share: f64,
    /// Flaky units are observed at a flaky failure that directly followed
    /// a pass: their newest run fails and the one before it passes.
    pub reference_at_failure: bool,
    /// Stable tail of a fixed unit, in runs, drawn uniformly.
    pub fixed_tail_min: usize,
    pub fixed_tail_max: usize,
    pub duration_model: DurationModel,
    /// Mean commits per day in every repository.
    pub churn_intensity: f64,
    pub pr_size: PrSizeModel,
    pub n_repos: usize,
    pub run_interval_hours: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_flaky: 100,
            n_nonflaky: 100,
            history_length: 200,
            flaky_failure_prob: 0.3,
            regression_segments: 2,
            regression_mean_length: 10.0,
            recent_regression_span: 15,
            typical_share: 0.15,
            timeout_share: 0.4,
            flaky_verdict_share: 0.05,
            cached_share: 0.05,
            fixed_share: 0.0,
            reference_at_failure: false,
            fixed_tail_min: 5,
            fixed_tail_max: 20,
            duration_model: DurationModel::default(),
            churn_intensity: 6.0,
            pr_size: PrSizeModel::default(),
            n_repos: 3,
            run_interval_hours: 6.0,
            seed: 42,
        }
    }
}

/// Smallest regression segment, in runs.
pub const MIN_REGRESSION_LENGTH: usize = 3;

const EPOCH: Timestamp = 1_600_000_000;
const AUTHORS_PER_REPO: usize = 10;
const EXTENSIONS: [(&str, u32); 8] = [
    ("cpp", 30),
    ("h", 20),
    ("py", 15),
    ("md", 8),
    ("json", 8),
    ("yaml", 8),
    ("txt", 5),
    ("", 6),
];
const SOURCE_EXTENSIONS: [&str; 2] = ["cpp", "h"];
const DIRECTORIES: [&str; 6] = ["core", "net", "ui", "storage", "tools", "docs"];

impl SynthConfig {
    /// Data where every non-flaky unit is a flaky test that was fixed
    /// 10 to 30 runs before its reference time, and flaky units are
    /// observed at a flaky failure.
    pub fn recently_fixed() -> Self {
        SynthConfig {
            typical_share: 0.0,
            fixed_share: 1.0,
            fixed_tail_min: 10,
            fixed_tail_max: 30,
            reference_at_failure: true,
            ..SynthConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64, open: bool| {
            let ok = if open { v > 0.0 && v < 1.0 } else { (0.0..=1.0).contains(&v) };
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be a probability, got {v}")))
            }
        };
        if self.n_flaky == 0 || self.n_nonflaky == 0 {
            return Err(Error::Config("both classes need at least one unit".into()));
        }
        if self.history_length < 2 {
            return Err(Error::Config("history_length must be at least 2".into()));
        }
        prob("flaky_failure_prob", self.flaky_failure_prob, true)?;
        prob("typical_share", self.typical_share, false)?;
        prob("timeout_share", self.timeout_share, false)?;
        prob("flaky_verdict_share", self.flaky_verdict_share, false)?;
        prob("cached_share", self.cached_share, false)?;
        prob("fixed_share", self.fixed_share, false)?;
        if self.regression_segments == 0 || self.regression_mean_length < MIN_REGRESSION_LENGTH as f64 {
            return Err(Error::Config(format!(
                "regressions need at least one segment of mean length >= {MIN_REGRESSION_LENGTH}"
            )));
        }
        if self.fixed_tail_min == 0
            || self.fixed_tail_min > self.fixed_tail_max
            || self.fixed_tail_max >= self.history_length
        {
            return Err(Error::Config("fixed tail must satisfy 1 <= min <= max < history_length".into()));
        }
        let d = &self.duration_model;
        if !(d.pass_mean > 0.0 && d.fail_mean > 0.0 && d.timeout_mean > 0.0 && d.noise_sd >= 0.0) {
            return Err(Error::Config("durations must be positive".into()));
        }
        if d.timeout_mean <= d.pass_mean {
            return Err(Error::Config("timeout_mean must exceed pass_mean".into()));
        }
        let p = &self.pr_size;
        if !(p.small_files_mean >= 1.0 && p.large_files_mean >= 1.0 && p.large_extra_authors_mean >= 0.0) {
            return Err(Error::Config("PR sizes must be at least one file".into()));
        }
        if self.churn_intensity <= 0.0 || self.n_repos == 0 || self.run_interval_hours <= 0.0 {
            return Err(Error::Config(
                "churn_intensity, n_repos and run_interval_hours must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// How a unit's outcomes were generated; the label follows from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    Flaky { timeout: bool },
    /// Flaky until the last `tail` runs, which all pass.
    Fixed { timeout: bool, tail: usize },
    /// Fails exactly inside the `(start, length)` segments.
    Regression { segments: Vec<(usize, usize)> },
    AlwaysPass,
    AlwaysFail,
}

impl Mechanism {
    pub fn is_flaky(&self) -> bool {
        matches!(self, Mechanism::Flaky { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub dataset: Dataset,
    /// Generating mechanism per unit, aligned with `dataset.units`.
    pub mechanisms: Vec<Mechanism>,
    /// Commits of each unit's pull request, all present in its repo log.
    pub pr_commits: BTreeMap<String, Vec<String>>,
}

/// Failure pattern of a length-`n` history that fails only inside the
/// given segments.
pub fn regression_schedule(n: usize, segments: &[(usize, usize)]) -> Vec<bool> {
    let mut failed = vec![false; n];
    for &(start, len) in segments {
        for f in failed.iter_mut().skip(start).take(len) {
            *f = true;
        }
    }
    failed
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn poisson(&mut self, mean: f64) -> usize {
        if mean <= 0.0 {
            return 0;
        }
        Poisson::new(mean).expect("positive mean").sample(&mut self.rng) as usize
    }

    fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        if sd == 0.0 {
            return mean;
        }
        Normal::new(mean, sd).expect("finite sd").sample(&mut self.rng)
    }

    fn extension(&mut self, source_only: bool) -> &'static str {
        if source_only {
            return SOURCE_EXTENSIONS[self.rng.random_range(0..SOURCE_EXTENSIONS.len())];
        }
        let total: u32 = EXTENSIONS.iter().map(|e| e.1).sum();
        let mut pick = self.rng.random_range(0..total);
        for (ext, w) in EXTENSIONS {
            if pick < w {
                return ext;
            }
            pick -= w;
        }
        unreachable!("weights cover the range")
    }

    fn path(&mut self, source_only: bool) -> String {
        let dir = DIRECTORIES[self.rng.random_range(0..DIRECTORIES.len())];
        let ext = self.extension(source_only);
        let n = self.rng.random_range(0..200);
        if ext.is_empty() {
            format!("{dir}/BUILD{n}")
        } else {
            format!("{dir}/file{n}.{ext}")
        }
    }

    fn paths(&mut self, count: usize, source_only: bool) -> Vec<String> {
        (0..count).map(|_| self.path(source_only)).collect()
    }

    fn author(&mut self, repo: usize) -> String {
        format!("dev{}.r{repo}@example.com", self.rng.random_range(0..AUTHORS_PER_REPO))
    }

    fn mechanisms(&mut self) -> Vec<Mechanism> {
        let cfg = self.cfg;
        let mut out = Vec::with_capacity(cfg.n_flaky + cfg.n_nonflaky);
        for _ in 0..cfg.n_flaky {
            let timeout = self.rng.random_bool(cfg.timeout_share);
            out.push(Mechanism::Flaky { timeout });
        }
        let n_typical = (cfg.typical_share * cfg.n_nonflaky as f64).round() as usize;
        let rest = cfg.n_nonflaky - n_typical.min(cfg.n_nonflaky);
        let n_fixed = (cfg.fixed_share * rest as f64).round() as usize;
        for i in 0..cfg.n_nonflaky {
            let m = if i < n_typical {
                if i % 2 == 0 {
                    Mechanism::AlwaysPass
                } else {
                    Mechanism::AlwaysFail
                }
            } else if i < n_typical + n_fixed {
                Mechanism::Fixed {
                    timeout: self.rng.random_bool(cfg.timeout_share),
                    tail: self.rng.random_range(cfg.fixed_tail_min..=cfg.fixed_tail_max),
                }
            } else {
                Mechanism::Regression {
                    segments: self.regression_segments(),
                }
            };
            out.push(m);
        }
        out
    }

    fn segment_length(&mut self) -> usize {
        MIN_REGRESSION_LENGTH + self.poisson(self.cfg.regression_mean_length - MIN_REGRESSION_LENGTH as f64)
    }

    /// The latest segment ends shortly before the reference time; earlier
    /// ones are laid out backwards with passing gaps in between.
    fn regression_segments(&mut self) -> Vec<(usize, usize)> {
        let n = self.cfg.history_length;
        let count = self.rng.random_range(1..=self.cfg.regression_segments);
        let mut segments = Vec::new();
        let mut end = n - self.rng.random_range(0..=self.cfg.recent_regression_span.min(n - 2));
        for _ in 0..count {
            let len = self.segment_length().min(end - 1);
            if len == 0 {
                break;
            }
            segments.push((end - len, len));
            let gap = 5 + self.rng.random_range(0..n / 4 + 1);
            if end - len <= gap + MIN_REGRESSION_LENGTH + 1 {
                break;
            }
            end = end - len - gap;
        }
        segments.reverse();
        segments
    }

    fn failures(&mut self, m: &Mechanism) -> Vec<bool> {
        let n = self.cfg.history_length;
        let p = self.cfg.flaky_failure_prob;
        match m {
            Mechanism::Flaky { .. } => {
                let mut failed: Vec<bool> = (0..n).map(|_| self.rng.random_bool(p)).collect();
                if self.cfg.reference_at_failure {
                    failed[n - 1] = true;
                    failed[n - 2] = false;
                }
                failed
            }
            Mechanism::Fixed { tail, .. } => (0..n).map(|i| i < n - tail && self.rng.random_bool(p)).collect(),
            Mechanism::Regression { segments } => regression_schedule(n, segments),
            Mechanism::AlwaysPass => vec![false; n],
            Mechanism::AlwaysFail => vec![true; n],
        }
    }

    fn records(&mut self, unit: &Unit, m: &Mechanism) -> Vec<ExecutionRecord> {
        let cfg = self.cfg;
        let d = cfg.duration_model;
        let interval = cfg.run_interval_hours * 3600.0;
        let n = cfg.history_length;
        let pass_mean = d.pass_mean * self.normal(0.0, 0.4).exp();
        let (stochastic, timeout) = match *m {
            Mechanism::Flaky { timeout } | Mechanism::Fixed { timeout, .. } => (true, timeout),
            _ => (false, false),
        };
        let failed = self.failures(m);
        // the observed failure and the pass before it really executed
        let real_from = if cfg.reference_at_failure && m.is_flaky() { n - 2 } else { n };
        let mut out = Vec::with_capacity(n);
        for (i, &fail) in failed.iter().enumerate() {
            let back = (n - 1 - i) as f64 * interval + self.rng.random_range(0.0..interval / 2.0);
            let timestamp = unit.reference_time - back.round() as i64;
            let (outcome, mean) = if fail {
                let verdict = if stochastic && self.rng.random_bool(cfg.flaky_verdict_share) {
                    TestOutcome::FlakyVerdict
                } else {
                    TestOutcome::Failed
                };
                (verdict, if timeout { d.timeout_mean } else { d.fail_mean })
            } else if i < real_from && self.rng.random_bool(cfg.cached_share) {
                (TestOutcome::CachedPassed, 0.0)
            } else {
                (TestOutcome::Passed, pass_mean)
            };
            let duration = if mean == 0.0 {
                0.0
            } else {
                (self.normal(mean, d.noise_sd).max(0.01) * 1000.0).round() / 1000.0
            };
            out.push(ExecutionRecord {
                test_id: unit.test_id.clone(),
                timestamp,
                outcome,
                duration,
                build_id: Some(format!("b{timestamp}")),
                pipeline: None,
            });
        }
        out
    }

    fn background_commits(&mut self, repo: usize, repo_id: &str, from: Timestamp, to: Timestamp) -> Vec<CommitRecord> {
        let mut commits = Vec::new();
        let days = (to - from) / SECONDS_PER_DAY + 1;
        for day in 0..days {
            for _ in 0..self.poisson(self.cfg.churn_intensity) {
                let timestamp = from + day * SECONDS_PER_DAY + self.rng.random_range(0..SECONDS_PER_DAY);
                let n_files = 1 + self.poisson(1.5);
                commits.push(CommitRecord {
                    commit_id: format!("{repo_id}-{:06}", commits.len()),
                    timestamp,
                    author_id: self.author(repo),
                    changed_paths: self.paths(n_files, false),
                });
            }
        }
        commits
    }

    /// Commits of the unit's PR, landing within two days before its
    /// reference time.
    fn pr_commits(&mut self, repo: usize, unit: &Unit, large: bool) -> Vec<CommitRecord> {
        let p = self.cfg.pr_size;
        let (n_files, n_commits, n_authors) = if large {
            let files = 1 + self.poisson(p.large_files_mean - 1.0);
            (files, self.rng.random_range(2..=5), 1 + self.poisson(p.large_extra_authors_mean))
        } else {
            let files = 1 + self.poisson(p.small_files_mean - 1.0);
            (files, self.rng.random_range(1..=2), 1)
        };
        let n_commits = n_commits.min(n_files);
        let paths = self.paths(n_files, large);
        let authors: Vec<String> = (0..n_authors).map(|_| self.author(repo)).collect();
        (0..n_commits)
            .map(|c| CommitRecord {
                commit_id: format!("{}-pr{c}", unit.unit_id),
                timestamp: unit.reference_time - self.rng.random_range(60..2 * SECONDS_PER_DAY),
                author_id: authors[c % authors.len()].clone(),
                changed_paths: paths.iter().skip(c).step_by(n_commits).cloned().collect(),
            })
            .collect()
    }
}

/// Generates a dataset; identical configs give identical datasets.
pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut g = Generator {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let mechanisms = g.mechanisms();
    let history_span = (cfg.history_length as f64 * cfg.run_interval_hours * 3600.0).ceil() as i64;
    let ref_lo = EPOCH + history_span.max(60 * SECONDS_PER_DAY) + SECONDS_PER_DAY;
    let ref_hi = ref_lo + 60 * SECONDS_PER_DAY;

    let repo_ids: Vec<String> = (0..cfg.n_repos).map(|r| format!("repo{r}")).collect();
    let mut units = Vec::with_capacity(mechanisms.len());
    let mut records = Vec::new();
    for (i, m) in mechanisms.iter().enumerate() {
        let repo = g.rng.random_range(0..cfg.n_repos);
        let unit = Unit {
            unit_id: format!("u{i:04}"),
            test_id: format!("{}.suite{}.Test{i:04}", repo_ids[repo], i % 7),
            reference_time: g.rng.random_range(ref_lo..ref_hi),
            repo_id: repo_ids[repo].clone(),
            label: Some(m.is_flaky()),
        };
        records.extend(g.records(&unit, m));
        units.push(unit);
    }

    let mut logs = Vec::with_capacity(cfg.n_repos);
    let mut pr_commits = BTreeMap::new();
    for (r, repo_id) in repo_ids.iter().enumerate() {
        let mut commits = g.background_commits(r, repo_id, EPOCH, ref_hi);
        for (unit, m) in units.iter().zip(&mechanisms) {
            if unit.repo_id != *repo_id {
                continue;
            }
            let large = matches!(m, Mechanism::Regression { .. });
            let pr = g.pr_commits(r, unit, large);
            pr_commits.insert(unit.unit_id.clone(), pr.iter().map(|c| c.commit_id.clone()).collect::<Vec<_>>());
            commits.extend(pr);
        }
        logs.push(ChurnLog::new(repo_id.clone(), commits)?);
    }

    let mut pr = BTreeMap::new();
    for unit in &units {
        let log = logs.iter().find(|l| l.repo_id == unit.repo_id).expect("every repo has a log");
        pr.insert(unit.unit_id.clone(), pull_request_info(log, &pr_commits[&unit.unit_id])?);
    }
    Ok(SynthDataset {
        config: cfg.clone(),
        dataset: Dataset::new(units, records, logs, pr)?,
        mechanisms,
        pr_commits,
    })
}

/// Predefined feature-set and learner combinations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preset {
    /// Depth-1 tree on a single flip rate.
    FlipRate(DecayKind),
    /// Depth-1 tree on entropy.
    Entropy,
    /// Boosting on the reciprocal-squared flip rate plus mean duration.
    Duration,
    /// ... plus the pass/fail duration difference.
    DurationDiff,
    /// ... plus both duration features.
    DurationBoth,
    /// Boosting on the flip rate plus churn, project and PR features.
    Churn,
    /// Boosting on all of the above.
    Full,
    /// Boosting on the three features with the largest mean |SHAP| in a
    /// cross-validated full run.
    Top3,
}

impl Preset {
    pub const NAMES: [&'static str; 13] = [
        "rq1-constant",
        "rq1-linear",
        "rq1-exponential",
        "rq1-reciprocal",
        "rq1-recsq",
        "rq1-ewma",
        "rq1-entropy",
        "rq2-duration",
        "rq2-diff",
        "rq2-both",
        "rq3-churn",
        "full",
        "top3",
    ];

    pub fn flags(self) -> FeatureFlags {
        let recsq = vec![DecayKind::ReciprocalSquared];
        let durations = |mean: bool, diff: bool| FeatureFlags {
            mean_duration: mean,
            mean_duration_diff: diff,
            ..FeatureFlags::outcomes_only(recsq.clone(), false)
        };
        match self {
            Preset::FlipRate(k) => FeatureFlags::outcomes_only(vec![k], false),
            Preset::Entropy => FeatureFlags::outcomes_only(vec![], true),
            Preset::Duration => durations(true, false),
            Preset::DurationDiff => durations(false, true),
            Preset::DurationBoth => durations(true, true),
            Preset::Churn => FeatureFlags {
                mean_duration: false,
                mean_duration_diff: false,
                entropy: false,
                ..FeatureFlags::all(recsq)
            },
            Preset::Full | Preset::Top3 => FeatureFlags {
                entropy: false,
                ..FeatureFlags::all(recsq)
            },
        }
    }

    pub fn trainer(self) -> Trainer {
        match self {
            Preset::FlipRate(_) | Preset::Entropy => Trainer::Stump,
            _ => Trainer::Gbm(GbmParams::default()),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rq1-constant" => Preset::FlipRate(DecayKind::Constant),
            "rq1-linear" => Preset::FlipRate(DecayKind::Linear),
            "rq1-exponential" => Preset::FlipRate(DecayKind::Exponential),
            "rq1-reciprocal" => Preset::FlipRate(DecayKind::Reciprocal),
            "rq1-recsq" => Preset::FlipRate(DecayKind::ReciprocalSquared),
            "rq1-ewma" => Preset::FlipRate(DecayKind::ewma(DEFAULT_EWMA_LAMBDA)?),
            "rq1-entropy" => Preset::Entropy,
            "rq2-duration" => Preset::Duration,
            "rq2-diff" => Preset::DurationDiff,
            "rq2-both" => Preset::DurationBoth,
            "rq3-churn" => Preset::Churn,
            "full" => Preset::Full,
            "top3" => Preset::Top3,
            _ => {
                return Err(Error::Config(format!(
                    "unknown preset {s}; expected one of {}",
                    Preset::NAMES.join(", ")
                )))
            }
        })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Preset::FlipRate(DecayKind::Constant) => "rq1-constant",
            Preset::FlipRate(DecayKind::Linear) => "rq1-linear",
            Preset::FlipRate(DecayKind::Exponential) => "rq1-exponential",
            Preset::FlipRate(DecayKind::Reciprocal) => "rq1-reciprocal",
            Preset::FlipRate(DecayKind::ReciprocalSquared) => "rq1-recsq",
            Preset::FlipRate(DecayKind::Ewma(_)) => "rq1-ewma",
            Preset::Entropy => "rq1-entropy",
            Preset::Duration => "rq2-duration",
            Preset::DurationDiff => "rq2-diff",
            Preset::DurationBoth => "rq2-both",
            Preset::Churn => "rq3-churn",
            Preset::Full => "full",
            Preset::Top3 => "top3",
        };
        f.write_str(name)
    }
}

/// Outcome of one feature-set experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: EvaluationReport,
    /// Out-of-fold attributions: each unit explained by the model that did
    /// not see it.
    pub explanation: ShapExplanation,
    pub matrix: FeatureMatrix,
    pub cv: CrossValidation,
}

/// Cross-validates `trainer` on `data` and explains every held-out unit.
pub fn cross_validate_explained(data: &FeatureMatrix, trainer: &Trainer, k: usize, seed: u64) -> Result<Experiment> {
    let cv = cross_validate(data, trainer, k, seed)?;
    let parts = cv
        .folds
        .iter()
        .map(|f| tree_shap(&f.model, &data.select_rows(&f.fold.test)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Experiment {
        report: cv.report.clone(),
        explanation: concat_explanations(parts, &data.unit_ids)?,
        matrix: data.clone(),
        cv,
    })
}

/// Featurizes `dataset` with `flags` and runs [`cross_validate_explained`].
pub fn run_experiment(
    dataset: &Dataset,
    flags: &FeatureFlags,
    trainer: &Trainer,
    k: usize,
    seed: u64,
) -> Result<Experiment> {
    let (matrix, _) = dataset.extract(flags, HistoryWindow::default())?;
    cross_validate_explained(&matrix, trainer, k, seed)
}

/// Keeps the `k` features with the largest out-of-fold mean |SHAP|.
pub fn top_k_schema(full: &Experiment, k: usize) -> Result<FeatureSchema> {
    select_top_k(&rank_features(&full.explanation), &full.matrix.schema, k)
}

/// Runs a preset on an already extracted matrix, which must contain the
/// preset's columns.
pub fn run_preset_on(matrix: &FeatureMatrix, preset: Preset, k: usize, seed: u64) -> Result<Experiment> {
    let base = if preset == Preset::Top3 { Preset::Full } else { preset };
    let data = select_columns(matrix, &base.flags())?;
    let first = cross_validate_explained(&data, &base.trainer(), k, seed)?;
    if preset != Preset::Top3 {
        return Ok(first);
    }
    let top = top_k_schema(&first, 3)?;
    cross_validate_explained(&data.project(&top)?, &preset.trainer(), k, seed)
}

/// The matrix `preset` trains on: its columns of `matrix`, narrowed for
/// `Top3` to the three features a cross-validated full run ranks highest.
pub fn preset_matrix(matrix: &FeatureMatrix, preset: Preset, k: usize, seed: u64) -> Result<FeatureMatrix> {
    if preset != Preset::Top3 {
        return select_columns(matrix, &preset.flags());
    }
    let full = select_columns(matrix, &Preset::Full.flags())?;
    let first = cross_validate_explained(&full, &Preset::Full.trainer(), k, seed)?;
    full.project(&top_k_schema(&first, 3)?)
}

/// The columns of `matrix` that `flags` asks for. Every requested
/// single-column feature must be present.
fn select_columns(matrix: &FeatureMatrix, flags: &FeatureFlags) -> Result<FeatureMatrix> {
    let mut required: Vec<FeatureKey> = flags.decay_kinds.iter().map(|&k| FeatureKey::FlipRate(k)).collect();
    for (on, key) in [
        (flags.entropy, FeatureKey::Entropy),
        (flags.mean_duration, FeatureKey::MeanDuration),
        (flags.mean_duration_diff, FeatureKey::MeanDurationDiff),
        (flags.pr, FeatureKey::PrChangedFiles),
        (flags.pr, FeatureKey::PrContributors),
    ] {
        if on {
            required.push(key);
        }
    }
    if let Some(missing) = required.iter().find(|k| matrix.schema.index_of(k).is_none()) {
        return Err(Error::SchemaMismatch(format!("feature matrix lacks column {missing}")));
    }
    let keys: Vec<FeatureKey> = matrix
        .schema
        .features()
        .iter()
        .filter(|key| match key {
            FeatureKey::FlipRate(kind) => flags.decay_kinds.contains(kind),
            FeatureKey::Entropy => flags.entropy,
            FeatureKey::MeanDuration => flags.mean_duration,
            FeatureKey::MeanDurationDiff => flags.mean_duration_diff,
            FeatureKey::Churn { window_days, .. } => flags.churn && flags.churn_windows.contains(window_days),
            FeatureKey::Project(_) => flags.project,
            FeatureKey::PrChangedFiles | FeatureKey::PrContributors => flags.pr,
        })
        .cloned()
        .collect();
    matrix.project(&matrix.schema.subset(&keys)?)
}

/// Featurizes `dataset` for `preset` and runs it.
pub fn run_preset(dataset: &Dataset, preset: Preset, k: usize, seed: u64) -> Result<Experiment> {
    let (matrix, _) = dataset.extract(&preset.flags(), HistoryWindow::default())?;
    run_preset_on(&matrix, preset, k, seed)
}
