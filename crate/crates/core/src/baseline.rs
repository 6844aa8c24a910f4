//! The "never five failures in a row" heuristic used as the comparison
//! baseline.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::{TestHistory, TestOutcome};

pub const DEFAULT_BASELINE_WINDOW: usize = 400;
/// A failure streak this long marks a test as broken rather than flaky.
pub const BROKEN_RUN_LENGTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineVerdict {
    Flaky,
    MostlyBroken,
    FullyBroken,
    Healthy,
}

impl fmt::Display for BaselineVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineVerdict::Flaky => "flaky",
            BaselineVerdict::MostlyBroken => "mostly_broken",
            BaselineVerdict::FullyBroken => "fully_broken",
            BaselineVerdict::Healthy => "healthy",
        })
    }
}

/// Classifies the last `window` records of a raw (unnormalized) history.
/// A rerun-passed verdict anywhere in the window is flaky outright;
/// otherwise failures count only when no failure streak reaches
/// [`BROKEN_RUN_LENGTH`]. Cached passes count as passes, skips are ignored.
pub fn baseline_classify(h: &TestHistory, window: usize) -> Result<BaselineVerdict> {
    if h.is_empty() {
        return Err(Error::InsufficientHistory("baseline needs at least one execution".into()));
    }
    if window == 0 {
        return Err(Error::Contract("baseline window must be positive".into()));
    }
    let recs = h.records();
    let recent = &recs[recs.len().saturating_sub(window)..];

    let mut any_flaky = false;
    let (mut failed, mut passed) = (0usize, 0usize);
    let (mut run, mut longest) = (0usize, 0usize);
    for r in recent {
        match r.outcome {
            TestOutcome::FlakyVerdict => {
                any_flaky = true;
                run = 0;
            }
            TestOutcome::Failed => {
                failed += 1;
                run += 1;
                longest = longest.max(run);
            }
            TestOutcome::Passed | TestOutcome::CachedPassed => {
                passed += 1;
                run = 0;
            }
            // not executed, transparent to streaks
            TestOutcome::Skipped => {}
        }
    }

    let intermittent = failed > 0 && longest < BROKEN_RUN_LENGTH;
    Ok(if any_flaky || intermittent {
        BaselineVerdict::Flaky
    } else if failed > 0 && passed == 0 {
        BaselineVerdict::FullyBroken
    } else if failed > 0 {
        BaselineVerdict::MostlyBroken
    } else {
        BaselineVerdict::Healthy
    })
}

pub fn baseline_predict_flaky(h: &TestHistory, window: usize) -> Result<bool> {
    Ok(baseline_classify(h, window)? == BaselineVerdict::Flaky)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::ExecutionRecord;
    use TestOutcome::{Failed as F, FlakyVerdict as K, Passed as P};

    fn hist(outs: &[TestOutcome]) -> TestHistory {
        let recs = outs
            .iter()
            .enumerate()
            .map(|(i, &outcome)| ExecutionRecord {
                test_id: "t".into(),
                timestamp: i as i64 + 1,
                outcome,
                duration: 1.0,
                build_id: None,
                pipeline: None,
            })
            .collect();
        TestHistory::new("t", recs)
    }

    fn classify(outs: &[TestOutcome]) -> BaselineVerdict {
        baseline_classify(&hist(outs), DEFAULT_BASELINE_WINDOW).unwrap()
    }

    #[test]
    fn scattered_short_failures_are_flaky() {
        let mut outs = vec![P; 400];
        for i in [10, 11, 12, 100, 250, 251, 399] {
            outs[i] = F;
        }
        assert_eq!(classify(&outs), BaselineVerdict::Flaky);
    }

    #[test]
    fn all_failed_is_fully_broken() {
        assert_eq!(classify(&[F; 400]), BaselineVerdict::FullyBroken);
    }

    #[test]
    fn long_streak_with_passes_is_mostly_broken() {
        assert_eq!(classify(&[F, F, F, F, F, F, P]), BaselineVerdict::MostlyBroken);
    }

    #[test]
    fn all_passed_is_healthy() {
        assert_eq!(classify(&[P; 20]), BaselineVerdict::Healthy);
    }

    #[test]
    fn streak_boundary() {
        assert!(baseline_predict_flaky(&hist(&[P, F, P, P]), 400).unwrap());
        assert!(!baseline_predict_flaky(&hist(&[P, F, F, F, F, F, P]), 400).unwrap());
        assert!(baseline_predict_flaky(&hist(&[P, F, F, F, F, P]), 400).unwrap());
    }

    #[test]
    fn rerun_verdict_short_circuits() {
        assert_eq!(classify(&[F, F, F, F, F, F, K]), BaselineVerdict::Flaky);
    }

    #[test]
    fn only_the_window_counts() {
        let mut outs = vec![F; 10];
        outs.extend(vec![P; 400]);
        assert_eq!(classify(&outs), BaselineVerdict::Healthy);
        assert!(baseline_classify(&hist(&[]), 400).is_err());
    }
}
