//! Shared input generators for the benchmarks.

use flakelens::features::{FeatureKey, FeatureMatrix, FeatureSchema};
use flakelens::{DecayKind, ExecutionRecord, TestHistory, TestOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A history of `n` runs failing independently with probability `p`.
pub fn bernoulli_history(n: usize, p: f64, seed: u64) -> TestHistory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|i| ExecutionRecord {
            test_id: "bench.test".into(),
            timestamp: 1_600_000_000 + i as i64 * 3600,
            outcome: if rng.random_bool(p) {
                TestOutcome::Failed
            } else {
                TestOutcome::Passed
            },
            duration: rng.random_range(1.0..60.0),
            build_id: None,
            pipeline: None,
        })
        .collect();
    TestHistory::new("bench.test", records)
}

/// `n` labeled rows over `m` (at most 11) numeric features where the
/// first two features carry the signal.
pub fn random_matrix(n: usize, m: usize, seed: u64) -> FeatureMatrix {
    let mut keys: Vec<FeatureKey> = DecayKind::ALL.iter().map(|&k| FeatureKey::FlipRate(k)).collect();
    keys.extend([
        FeatureKey::Entropy,
        FeatureKey::MeanDuration,
        FeatureKey::MeanDurationDiff,
        FeatureKey::PrChangedFiles,
        FeatureKey::PrContributors,
    ]);
    keys.truncate(m);
    let schema = FeatureSchema::new(keys).expect("distinct keys");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random::<f64>()).collect()).collect();
    let labels = rows
        .iter()
        .map(|r| Some(r[0] + 0.5 * r[1.min(m - 1)] + 0.3 * rng.random::<f64>() > 0.9))
        .collect();
    FeatureMatrix {
        schema,
        unit_ids: (0..n).map(|i| format!("u{i}")).collect(),
        labels,
        rows,
    }
}
