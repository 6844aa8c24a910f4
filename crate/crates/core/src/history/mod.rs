//! Test execution histories: parsing, normalization and windowing.

mod jsonl;
mod junit;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use jsonl::{parse_history_jsonl, write_history_jsonl};
pub use junit::parse_junit_report;

/// UTC seconds since the Unix epoch.
pub type Timestamp = i64;

pub const SECONDS_PER_DAY: i64 = 86_400;
pub const DEFAULT_MAX_AGE: i64 = 90 * SECONDS_PER_DAY;
pub const DEFAULT_MAX_COUNT: usize = 10_000;

/// Verdict of one test execution as reported by CI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestOutcome {
    Passed,
    Failed,
    /// Failed initially, passed on a rerun-on-failure.
    #[serde(rename = "flaky")]
    FlakyVerdict,
    CachedPassed,
    Skipped,
}

impl TestOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            TestOutcome::Passed => "passed",
            TestOutcome::Failed => "failed",
            TestOutcome::FlakyVerdict => "flaky",
            TestOutcome::CachedPassed => "cached_passed",
            TestOutcome::Skipped => "skipped",
        }
    }
}

impl fmt::Display for TestOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestOutcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "passed" => Ok(TestOutcome::Passed),
            "failed" => Ok(TestOutcome::Failed),
            "flaky" => Ok(TestOutcome::FlakyVerdict),
            "cached_passed" => Ok(TestOutcome::CachedPassed),
            "skipped" => Ok(TestOutcome::Skipped),
            _ => Err(format!("unknown outcome {s:?}")),
        }
    }
}

/// One execution of one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub test_id: String,
    pub timestamp: Timestamp,
    pub outcome: TestOutcome,
    /// Seconds, never negative.
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub build_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<String>,
}

/// Chronologically ordered executions of a single test.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TestHistory {
    pub test_id: String,
    records: Vec<ExecutionRecord>,
}

impl TestHistory {
    /// Builds a history, ordering by `(timestamp, build_id)` while keeping
    /// input order for equal keys. Records belonging to other tests are
    /// dropped.
    pub fn new(test_id: impl Into<String>, records: Vec<ExecutionRecord>) -> Self {
        let test_id = test_id.into();
        let mut records: Vec<_> = records
            .into_iter()
            .filter(|r| r.test_id == test_id)
            .collect();
        records.sort_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| a.build_id.cmp(&b.build_id))
        });
        TestHistory { test_id, records }
    }

    /// Groups a flat record list into one history per test id.
    pub fn group(records: Vec<ExecutionRecord>) -> BTreeMap<String, TestHistory> {
        let mut by_test: BTreeMap<String, Vec<ExecutionRecord>> = BTreeMap::new();
        for r in records {
            by_test.entry(r.test_id.clone()).or_default().push(r);
        }
        by_test
            .into_iter()
            .map(|(id, recs)| {
                let h = TestHistory::new(id.clone(), recs);
                (id, h)
            })
            .collect()
    }

    pub fn records(&self) -> &[ExecutionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn outcomes(&self) -> impl Iterator<Item = TestOutcome> + '_ {
        self.records.iter().map(|r| r.outcome)
    }

    /// Rewrites rerun-passed verdicts as plain failures and drops executions
    /// that did not actually run (cache hits, skips).
    pub fn normalize(&self) -> TestHistory {
        let records = self
            .records
            .iter()
            .filter(|r| {
                !matches!(r.outcome, TestOutcome::CachedPassed | TestOutcome::Skipped)
            })
            .map(|r| {
                let mut r = r.clone();
                if r.outcome == TestOutcome::FlakyVerdict {
                    r.outcome = TestOutcome::Failed;
                }
                r
            })
            .collect();
        TestHistory {
            test_id: self.test_id.clone(),
            records,
        }
    }

    /// Keeps the at most `max_count` most recent records with
    /// `reference_time - max_age <= timestamp <= reference_time`.
    pub fn window(&self, reference_time: Timestamp, max_age: i64, max_count: usize) -> TestHistory {
        let lo = reference_time.saturating_sub(max_age);
        let in_window: Vec<&ExecutionRecord> = self
            .records
            .iter()
            .filter(|r| r.timestamp >= lo && r.timestamp <= reference_time)
            .collect();
        let skip = in_window.len().saturating_sub(max_count);
        TestHistory {
            test_id: self.test_id.clone(),
            records: in_window.into_iter().skip(skip).cloned().collect(),
        }
    }
}

/// Free-function form of [`TestHistory::normalize`].
pub fn normalize_history(h: &TestHistory) -> TestHistory {
    h.normalize()
}

/// Free-function form of [`TestHistory::window`].
pub fn window_history(
    h: &TestHistory,
    reference_time: Timestamp,
    max_age: i64,
    max_count: usize,
) -> TestHistory {
    h.window(reference_time, max_age, max_count)
}

/// One test case observed at one instant; the labeled sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub unit_id: String,
    pub test_id: String,
    pub reference_time: Timestamp,
    pub repo_id: String,
    /// `true` means flaky.
    pub label: Option<bool>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn rec(ts: i64, outcome: TestOutcome) -> ExecutionRecord {
        ExecutionRecord {
            test_id: "t".into(),
            timestamp: ts,
            outcome,
            duration: 1.0,
            build_id: None,
            pipeline: None,
        }
    }

    fn hist(outcomes: &[TestOutcome]) -> TestHistory {
        let recs = outcomes
            .iter()
            .enumerate()
            .map(|(i, &o)| rec(i as i64 + 1, o))
            .collect();
        TestHistory::new("t", recs)
    }

    use TestOutcome::*;

    #[test]
    fn normalize_rewrites_flaky_verdicts() {
        let h = hist(&[Passed, FlakyVerdict, Passed]).normalize();
        assert_eq!(h.outcomes().collect::<Vec<_>>(), vec![Passed, Failed, Passed]);
    }

    #[test]
    fn normalize_drops_cache_hits_and_skips() {
        assert!(hist(&[CachedPassed, CachedPassed]).normalize().is_empty());
        let h = hist(&[Skipped, Failed, CachedPassed]).normalize();
        assert_eq!(h.outcomes().collect::<Vec<_>>(), vec![Failed]);
    }

    #[test]
    fn normalize_keeps_plain_verdicts() {
        let h = hist(&[Failed, Passed]);
        assert_eq!(h.normalize(), h);
    }

    #[test]
    fn window_keeps_everything_inside() {
        let h = hist(&[Passed; 5]);
        assert_eq!(h.window(10, 100, DEFAULT_MAX_COUNT).len(), 5);
    }

    #[test]
    fn window_caps_count_to_most_recent() {
        let h = hist(&[Passed; 12]);
        let w = h.window(100, 1000, 10);
        let ts: Vec<_> = w.records().iter().map(|r| r.timestamp).collect();
        assert_eq!(ts, (3..=12).collect::<Vec<_>>());
    }

    #[test]
    fn window_excludes_future_and_old_records() {
        let h = hist(&[Passed; 10]);
        let ts: Vec<_> = h.window(6, 2, 100).records().iter().map(|r| r.timestamp).collect();
        assert_eq!(ts, vec![4, 5, 6]);
    }

    #[test]
    fn equal_timestamps_order_by_build_then_input() {
        let mut a = rec(5, Passed);
        a.build_id = Some("b2".into());
        let mut b = rec(5, Failed);
        b.build_id = Some("b1".into());
        let mut c = rec(5, Skipped);
        c.build_id = Some("b2".into());
        let h = TestHistory::new("t", vec![a, b, c]);
        assert_eq!(h.outcomes().collect::<Vec<_>>(), vec![Failed, Passed, Skipped]);
    }

    fn outcome_strategy() -> impl Strategy<Value = TestOutcome> {
        prop_oneof![
            Just(Passed),
            Just(Failed),
            Just(FlakyVerdict),
            Just(CachedPassed),
            Just(Skipped)
        ]
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(outs in proptest::collection::vec(outcome_strategy(), 0..60)) {
            let once = hist(&outs).normalize();
            prop_assert_eq!(once.normalize(), once.clone());
            prop_assert!(once.outcomes().all(|o| matches!(o, Passed | Failed)));
        }

        #[test]
        fn window_bounds(n in 0usize..80, reference in 0i64..100, age in 1i64..50, cap in 1usize..40) {
            let h = hist(&vec![Passed; n]);
            let w = h.window(reference, age, cap);
            prop_assert!(w.len() <= n.min(cap));
            for r in w.records() {
                prop_assert!(r.timestamp >= reference - age && r.timestamp <= reference);
            }
        }
    }
}
