use crate::error::{Error, Result};
use crate::history::{TestHistory, TestOutcome};

use super::decay::DecayKind;

fn is_failure(o: TestOutcome) -> bool {
    matches!(o, TestOutcome::Failed | TestOutcome::FlakyVerdict)
}

/// Decay-weighted share of adjacent outcome pairs that differ.
///
/// The history must be normalized; the most recent transition receives
/// weight index 1.
pub fn flip_rate(h: &TestHistory, kind: DecayKind) -> Result<f64> {
    let outcomes: Vec<bool> = h.outcomes().map(is_failure).collect();
    flip_rate_of(&outcomes, kind)
}

/// [`flip_rate`] over a bare failure-indicator sequence in chronological
/// order.
pub fn flip_rate_of(failed: &[bool], kind: DecayKind) -> Result<f64> {
    if failed.len() < 2 {
        return Err(Error::InsufficientHistory(format!(
            "flip rate needs at least 2 executions, got {}",
            failed.len()
        )));
    }
    let m = failed.len() - 1;
    let (mut flipped, mut total) = (0.0, 0.0);
    // pairs walked newest-first so t = 1 is the latest transition; dividing
    // once at the end keeps the constant decay exactly flips / m
    for (i, pair) in failed.windows(2).rev().enumerate() {
        let w = kind.weight_unchecked(i + 1, m);
        total += w;
        if pair[0] != pair[1] {
            flipped += w;
        }
    }
    let rate = flipped / total;
    Ok(rate.clamp(0.0, 1.0))
}

/// Base-2 Shannon entropy of the pass/fail frequencies.
pub fn entropy(h: &TestHistory) -> Result<f64> {
    if h.is_empty() {
        return Err(Error::InsufficientHistory("entropy of an empty history".into()));
    }
    let n = h.len() as f64;
    let fails = h.outcomes().filter(|&o| is_failure(o)).count() as f64;
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    Ok(term(fails / n) + term(1.0 - fails / n))
}

pub fn mean_duration(h: &TestHistory) -> Result<f64> {
    if h.is_empty() {
        return Err(Error::InsufficientHistory("mean duration of an empty history".into()));
    }
    Ok(h.records().iter().map(|r| r.duration).sum::<f64>() / h.len() as f64)
}

/// Mean passing duration minus mean failing duration; `None` when either
/// class is absent.
pub fn mean_duration_diff(h: &TestHistory) -> Option<f64> {
    let (mut pass_sum, mut pass_n, mut fail_sum, mut fail_n) = (0.0, 0usize, 0.0, 0usize);
    for r in h.records() {
        match r.outcome {
            TestOutcome::Passed => {
                pass_sum += r.duration;
                pass_n += 1;
            }
            o if is_failure(o) => {
                fail_sum += r.duration;
                fail_n += 1;
            }
            _ => {}
        }
    }
    if pass_n == 0 || fail_n == 0 {
        return None;
    }
    Some(pass_sum / pass_n as f64 - fail_sum / fail_n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::ExecutionRecord;
    use proptest::prelude::*;
    use TestOutcome::{Failed as F, Passed as P};

    fn hist(outs: &[TestOutcome]) -> TestHistory {
        hist_d(&outs.iter().map(|&o| (o, 1.0)).collect::<Vec<_>>())
    }

    fn hist_d(runs: &[(TestOutcome, f64)]) -> TestHistory {
        let recs = runs
            .iter()
            .enumerate()
            .map(|(i, &(outcome, duration))| ExecutionRecord {
                test_id: "t".into(),
                timestamp: i as i64 + 1,
                outcome,
                duration,
                build_id: None,
                pipeline: None,
            })
            .collect();
        TestHistory::new("t", recs)
    }

    #[test]
    fn alternating_history_flips_fully() {
        for kind in DecayKind::ALL {
            let r = flip_rate(&hist(&[P, F, P, F, P]), kind).unwrap();
            assert!((r - 1.0).abs() < 1e-12, "{kind}: {r}");
            assert_eq!(flip_rate(&hist(&[P, P, P, P]), kind).unwrap(), 0.0);
        }
    }

    #[test]
    fn hand_evaluated_weighted_cases() {
        let h = hist(&[P, P, F]);
        let recsq = flip_rate(&h, DecayKind::ReciprocalSquared).unwrap();
        assert!((recsq - 1.0 / 1.25).abs() < 1e-12);
        let ewma = flip_rate(&h, DecayKind::Ewma(0.1)).unwrap();
        assert!((ewma - 1.0 / 1.9).abs() < 1e-12);
        assert!((ewma - 0.5263).abs() < 1e-4);
    }

    #[test]
    fn short_history_is_insufficient() {
        assert!(matches!(
            flip_rate(&hist(&[P]), DecayKind::Constant),
            Err(Error::InsufficientHistory(_))
        ));
        assert!(entropy(&hist(&[])).is_err());
        assert!(mean_duration(&hist(&[])).is_err());
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy(&hist(&[P, P, P])).unwrap(), 0.0);
        assert_eq!(entropy(&hist(&[P, P, F, F])).unwrap(), 1.0);
        let e = entropy(&hist(&[P, P, P, F])).unwrap();
        let oracle = -0.75 * 0.75f64.log2() - 0.25 * 0.25f64.log2();
        assert!((e - oracle).abs() < 1e-12);
        assert!((e - 0.8113).abs() < 1e-4);
    }

    #[test]
    fn same_entropy_different_flip_rate() {
        let a = hist(&[P, P, F, F]);
        let b = hist(&[P, F, P, F]);
        assert_eq!(entropy(&a).unwrap(), entropy(&b).unwrap());
        assert_ne!(
            flip_rate(&a, DecayKind::Constant).unwrap(),
            flip_rate(&b, DecayKind::Constant).unwrap()
        );
    }

    #[test]
    fn durations() {
        assert_eq!(mean_duration(&hist_d(&[(P, 2.0), (P, 4.0)])).unwrap(), 3.0);
        assert_eq!(mean_duration(&hist_d(&[(P, 7.5)])).unwrap(), 7.5);
        assert_eq!(mean_duration(&hist_d(&[(P, 0.0), (F, 0.0), (P, 0.0)])).unwrap(), 0.0);
        assert_eq!(mean_duration_diff(&hist_d(&[(P, 2.0), (P, 4.0), (F, 10.0)])), Some(-7.0));
        assert_eq!(mean_duration_diff(&hist_d(&[(P, 5.0), (F, 5.0)])), Some(0.0));
        assert_eq!(mean_duration_diff(&hist_d(&[(F, 1.0), (P, 10.0), (F, 3.0)])), Some(8.0));
        assert_eq!(mean_duration_diff(&hist_d(&[(P, 1.0)])), None);
    }

    #[test]
    fn stronger_decay_emphasizes_recent_flips() {
        let mut outs = vec![P; 30];
        outs.push(F);
        outs.push(P);
        let h = hist(&outs);
        let c = flip_rate(&h, DecayKind::Constant).unwrap();
        let r = flip_rate(&h, DecayKind::Reciprocal).unwrap();
        let rs = flip_rate(&h, DecayKind::ReciprocalSquared).unwrap();
        assert!(rs >= r && r >= c, "{rs} {r} {c}");
    }

    proptest! {
        #[test]
        fn constant_decay_is_unweighted(fails in proptest::collection::vec(any::<bool>(), 2..200)) {
            let flips = fails.windows(2).filter(|w| w[0] != w[1]).count();
            let expected = flips as f64 / (fails.len() - 1) as f64;
            let got = flip_rate_of(&fails, DecayKind::Constant).unwrap();
            prop_assert!((got - expected).abs() < 1e-12);
        }

        #[test]
        fn flip_rate_bounded_and_inversion_invariant(
            fails in proptest::collection::vec(any::<bool>(), 2..100),
            k in 0usize..6,
        ) {
            let kind = DecayKind::ALL[k];
            let a = flip_rate_of(&fails, kind).unwrap();
            let inverted: Vec<bool> = fails.iter().map(|f| !f).collect();
            let b = flip_rate_of(&inverted, kind).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn entropy_symmetric_and_order_free(fails in proptest::collection::vec(any::<bool>(), 1..100)) {
            let outs: Vec<TestOutcome> = fails.iter().map(|&f| if f { F } else { P }).collect();
            let swapped: Vec<TestOutcome> = fails.iter().map(|&f| if f { P } else { F }).collect();
            let mut sorted = outs.clone();
            sorted.sort_by_key(|o| *o == F);
            let e = entropy(&hist(&outs)).unwrap();
            prop_assert!((0.0..=1.0).contains(&e));
            prop_assert!((e - entropy(&hist(&swapped)).unwrap()).abs() < 1e-12);
            prop_assert!((e - entropy(&hist(&sorted)).unwrap()).abs() < 1e-12);
        }
    }
}
