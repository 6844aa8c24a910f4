//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; the process exits non-zero
//! if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use flakelens::baseline::{baseline_classify, BaselineVerdict, DEFAULT_BASELINE_WINDOW};
use flakelens::churn::parse_churn_tsv;
use flakelens::explain::{brute_force_shapley, tree_shap};
use flakelens::features::{
    churn_window_counts, entropy, flip_rate, flip_rate_of, DecayKind, FeatureFlags, FeatureKey,
    FeatureMatrix, FeatureSchema,
};
use flakelens::history::{
    parse_history_jsonl, parse_junit_report, write_history_jsonl, ExecutionRecord, TestHistory,
    TestOutcome,
};
use flakelens::learner::{
    fit_cart, fit_gbm, fit_gbm_traced, fit_stump, stratified_kfold, CartParams, Confusion,
    GbmParams, TreeEnsembleModel,
};
use flakelens::synth::{generate, run_preset_on, Preset, SynthConfig};
use flakelens::HistoryWindow;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Fixture = (&'static str, FeatureSchema, Vec<Vec<f64>>, Vec<bool>);
/// Predicted, actual, then the expected precision, recall and F1.
type MetricCase = (Vec<bool>, Vec<bool>, f64, f64, f64);
type Criterion = (&'static str, fn() -> Outcome, Duration);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

fn history(outcomes: &[TestOutcome]) -> TestHistory {
    let records = outcomes
        .iter()
        .enumerate()
        .map(|(i, &outcome)| ExecutionRecord {
            test_id: "t".into(),
            timestamp: 1_000 + i as i64,
            outcome,
            duration: 1.0,
            build_id: None,
            pipeline: None,
        })
        .collect();
    TestHistory::new("t", records)
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

// 1 ---------------------------------------------------------------------

fn formula_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let n = rng.random_range(2..=300);
        let p = rng.random::<f64>();
        let seq: Vec<bool> = (0..n).map(|_| rng.random_bool(p)).collect();
        let flips = seq.windows(2).filter(|w| w[0] != w[1]).count();
        let expected = flips as f64 / (n - 1) as f64;
        let got = flip_rate_of(&seq, DecayKind::Constant).map_err(|e| e.to_string())?;
        ensure!(got == expected, "constant flip rate {got} != {expected} on length {n}");
    }
    for kind in DecayKind::ALL {
        for m in [1, 2, 3, 10, 57, 400, 10_000] {
            let sum: f64 = kind.normalized_weights(m).iter().sum();
            ensure!((sum - 1.0).abs() <= 1e-12, "{kind} weights for m={m} sum to {sum}");
        }
    }
    use TestOutcome::{Failed as F, Passed as P};
    let half = entropy(&history(&[P, F, F, P])).map_err(|e| e.to_string())?;
    ensure!(half == 1.0, "entropy(p=0.5) = {half}");
    for pure in [[P, P, P], [F, F, F]] {
        let e = entropy(&history(&pure)).map_err(|e| e.to_string())?;
        ensure!(e == 0.0, "entropy of a pure history = {e}");
    }
    let ppf = history(&[P, P, F]);
    let recsq = flip_rate(&ppf, DecayKind::ReciprocalSquared).map_err(|e| e.to_string())?;
    ensure!((recsq - 0.8).abs() <= 1e-9, "recsq(P,P,F) = {recsq}");
    let ewma = flip_rate(&ppf, DecayKind::Ewma(0.1)).map_err(|e| e.to_string())?;
    ensure!((ewma - 1.0 / 1.9).abs() <= 1e-9, "ewma(P,P,F) = {ewma}");
    Ok(format!("recsq(P,P,F)={recsq}, ewma(P,P,F)={ewma:.6}"))
}

// 2 ---------------------------------------------------------------------

/// Independent verdict: drop skips, split the window into maximal runs of
/// equal outcome and inspect failure-run lengths directly.
fn scan_verdict(outcomes: &[TestOutcome], window: usize) -> BaselineVerdict {
    let start = outcomes.len().saturating_sub(window);
    let executed: Vec<TestOutcome> = outcomes[start..]
        .iter()
        .copied()
        .filter(|&o| o != TestOutcome::Skipped)
        .collect();
    if executed.contains(&TestOutcome::FlakyVerdict) {
        return BaselineVerdict::Flaky;
    }
    let mut runs: Vec<(bool, usize)> = Vec::new();
    for o in executed {
        let failed = o == TestOutcome::Failed;
        match runs.last_mut() {
            Some((f, len)) if *f == failed => *len += 1,
            _ => runs.push((failed, 1)),
        }
    }
    let fail_runs: Vec<usize> = runs.iter().filter(|r| r.0).map(|r| r.1).collect();
    let any_pass = runs.iter().any(|r| !r.0);
    match fail_runs.iter().max() {
        None => BaselineVerdict::Healthy,
        Some(&longest) if longest < 5 => BaselineVerdict::Flaky,
        Some(_) if !any_pass => BaselineVerdict::FullyBroken,
        Some(_) => BaselineVerdict::MostlyBroken,
    }
}

fn random_outcomes(rng: &mut ChaCha8Rng) -> Vec<TestOutcome> {
    use TestOutcome::*;
    let n = rng.random_range(1..=500);
    let p_fail = [0.0, 0.01, 0.1, 0.4, 0.9][rng.random_range(0..5)];
    let p_rare = if rng.random_bool(0.3) { 0.01 } else { 0.0 };
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if rng.random_bool(0.05) {
            // streak around the broken boundary, sometimes split by a skip
            let len = rng.random_range(3..=7);
            for _ in 0..len {
                out.push(Failed);
                if rng.random_bool(0.1) {
                    out.push(Skipped);
                }
            }
            continue;
        }
        let o = if rng.random_bool(p_rare) {
            [FlakyVerdict, Skipped][rng.random_range(0..2)]
        } else if rng.random_bool(p_fail) {
            Failed
        } else if rng.random_bool(0.1) {
            CachedPassed
        } else {
            Passed
        };
        out.push(o);
    }
    out.truncate(n);
    out
}

fn baseline_oracle() -> Outcome {
    use TestOutcome::{Failed as F, Passed as P, Skipped as S};
    let w = DEFAULT_BASELINE_WINDOW;
    let mut boundary: Vec<Vec<TestOutcome>> = vec![
        vec![P, F, F, F, F, P],
        vec![P, F, F, F, F, F, P],
        vec![F, F, F, F, F],
        vec![F, F, F, F],
        vec![P, F, F, S, F, F, F, P],
    ];
    // a five-run straddling the window edge keeps only four inside
    let mut edge = vec![P; 10];
    edge.extend(vec![F; 5]);
    edge.extend(vec![P; w - 4]);
    boundary.push(edge);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut cases = boundary;
    cases.extend((0..10_000).map(|_| random_outcomes(&mut rng)));
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for outs in &cases {
        let got = baseline_classify(&history(outs), w).map_err(|e| e.to_string())?;
        let want = scan_verdict(outs, w);
        ensure!(got == want, "verdict {got} != oracle {want} for history of length {}", outs.len());
        *counts.entry(got.to_string()).or_default() += 1;
    }
    let exact5 = baseline_classify(&history(&[P, F, F, F, F, F, P]), w).map_err(|e| e.to_string())?;
    ensure!(exact5 == BaselineVerdict::MostlyBroken, "exactly five failures gave {exact5}");
    let four = baseline_classify(&history(&[P, F, F, F, F, P]), w).map_err(|e| e.to_string())?;
    ensure!(four == BaselineVerdict::Flaky, "four failures gave {four}");
    Ok(format!("{} histories, verdicts {counts:?}", cases.len()))
}

// 3 ---------------------------------------------------------------------

fn schema_of(m: usize) -> FeatureSchema {
    let mut keys: Vec<FeatureKey> = DecayKind::ALL.iter().map(|&k| FeatureKey::FlipRate(k)).collect();
    keys.extend([
        FeatureKey::Entropy,
        FeatureKey::MeanDuration,
        FeatureKey::MeanDurationDiff,
        FeatureKey::PrChangedFiles,
        FeatureKey::PrContributors,
    ]);
    keys.truncate(m);
    FeatureSchema::new(keys).expect("distinct keys")
}

fn random_row(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m)
        .map(|_| {
            if rng.random_bool(0.5) {
                rng.random_range(0..4) as f64
            } else {
                rng.random::<f64>() * 10.0
            }
        })
        .collect()
}

fn random_model(rng: &mut ChaCha8Rng) -> Result<(TreeEnsembleModel, Vec<Vec<f64>>), String> {
    let m = rng.random_range(1..=10);
    let schema = schema_of(m);
    let n = rng.random_range(12..=60);
    let x: Vec<Vec<f64>> = (0..n).map(|_| random_row(rng, m)).collect();
    let mut y: Vec<bool> = x
        .iter()
        .map(|r| r[0] + rng.random::<f64>() * 6.0 > 6.0)
        .collect();
    y[0] = true;
    y[1] = false;
    let depth = rng.random_range(1..=4);
    let model = match rng.random_range(0..3) {
        0 => fit_stump(&x, &y, &schema),
        1 => fit_cart(&x, &y, &schema, CartParams { max_depth: depth, min_leaf: 2 }),
        _ => fit_gbm(
            &x,
            &y,
            &schema,
            GbmParams {
                n_trees: rng.random_range(1..=8),
                learning_rate: 0.3,
                max_depth: depth,
                min_leaf: 2,
            },
        ),
    };
    // a stump on constant columns is the only way fitting can fail here
    match model {
        Ok(model) => Ok((model, x)),
        Err(_) => random_model(rng),
    }
}

fn shap_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut worst_additivity) = (0.0f64, 0.0f64);
    for case in 0..200 {
        let (model, train) = random_model(&mut rng)?;
        ensure!(model.trees.iter().all(|t| t.depth() <= 4), "case {case}: tree deeper than 4");
        let m = model.schema.len();
        let input = random_row(&mut rng, m);
        let mut rows = train;
        rows.push(input.clone());
        let matrix = FeatureMatrix {
            schema: model.schema.clone(),
            unit_ids: (0..rows.len()).map(|i| format!("u{i}")).collect(),
            labels: vec![None; rows.len()],
            rows,
        };
        let e = tree_shap(&model, &matrix).map_err(|e| e.to_string())?;
        let fast = e.matrix.last().expect("input row explained");
        let exact = brute_force_shapley(&model, &input).map_err(|e| e.to_string())?;
        for (f, (a, b)) in fast.iter().zip(&exact).enumerate() {
            let err = (a - b).abs();
            worst = worst.max(err);
            ensure!(err <= 1e-6, "case {case} feature {f}: tree_shap {a} vs brute force {b}");
        }
        let additivity = e.max_additivity_error(&model, &matrix.rows);
        worst_additivity = worst_additivity.max(additivity);
        ensure!(additivity <= 1e-9, "case {case}: local accuracy violated by {additivity}");
    }
    Ok(format!("max |tree_shap - exact| = {worst:.2e}, max additivity error = {worst_additivity:.2e}"))
}

// 4 ---------------------------------------------------------------------

fn gbm_fixtures() -> Vec<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xor_x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 2) as f64, ((i / 2) % 2) as f64]).collect();
    let xor_y = xor_x.iter().map(|r| r[0] != r[1]).collect();
    let sep_x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
    let sep_y = (0..30).map(|i| i >= 12).collect();
    let noisy_x: Vec<Vec<f64>> = (0..120).map(|_| random_row(&mut rng, 5)).collect();
    let noisy_y = noisy_x.iter().map(|_| rng.random_bool(0.4)).collect();
    let conflict_x = vec![vec![1.0]; 10];
    let conflict_y = (0..10).map(|i| i < 3).collect();
    let synth = generate(&SynthConfig {
        n_flaky: 30,
        n_nonflaky: 30,
        ..SynthConfig::default()
    })
    .expect("synthetic fixture");
    let (matrix, _) = synth
        .dataset
        .extract(&Preset::Full.flags(), HistoryWindow::default())
        .expect("extract");
    let synth_y = matrix.required_labels().expect("labels");
    vec![
        ("xor", schema_of(2), xor_x, xor_y),
        ("separable", schema_of(1), sep_x, sep_y),
        ("noisy", schema_of(5), noisy_x, noisy_y),
        ("identical rows", schema_of(1), conflict_x, conflict_y),
        ("synthetic", matrix.schema, matrix.rows, synth_y),
    ]
}

fn learner_sanity() -> Outcome {
    let mut checked = 0;
    for (name, schema, x, y) in gbm_fixtures() {
        for (lr, depth) in [(0.1, 3), (0.3, 1), (0.5, 4)] {
            let params = GbmParams {
                n_trees: 60,
                learning_rate: lr,
                max_depth: depth,
                min_leaf: 2,
            };
            let (_, trace) = fit_gbm_traced(&x, &y, &schema, params).map_err(|e| e.to_string())?;
            for (i, w) in trace.windows(2).enumerate() {
                ensure!(
                    w[1] <= w[0] + 1e-12 * w[0].abs(),
                    "{name} lr={lr} depth={depth}: loss rose at tree {} ({} -> {})",
                    i + 1,
                    w[0],
                    w[1]
                );
            }
            checked += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for _ in 0..300 {
        let n = rng.random_range(10..=200);
        let share = rng.random_range(0.1..0.9);
        let y: Vec<bool> = (0..n).map(|_| rng.random_bool(share)).collect();
        let pos = y.iter().filter(|&&l| l).count();
        let neg = n - pos;
        let k = rng.random_range(2..=10);
        if pos < k || neg < k {
            continue;
        }
        let folds = stratified_kfold(&y, k, rng.random()).map_err(|e| e.to_string())?;
        let mut seen = vec![0; n];
        for f in &folds {
            let fp = f.test.iter().filter(|&&i| y[i]).count();
            let fnn = f.test.len() - fp;
            ensure!(fp >= pos / k && fp <= pos.div_ceil(k), "fold has {fp} positives of {pos} with k={k}");
            ensure!(fnn >= neg / k && fnn <= neg.div_ceil(k), "fold has {fnn} negatives of {neg} with k={k}");
            ensure!(f.train.len() + f.test.len() == n, "fold does not partition the data");
            f.test.iter().for_each(|&i| seen[i] += 1);
        }
        ensure!(seen.iter().all(|&c| c == 1), "a unit is not tested exactly once");
    }

    // expected values worked out by hand
    let t = true;
    let f = false;
    let cases: [MetricCase; 4] = [
        (
            [vec![t; 6], vec![t; 4], vec![f; 8], vec![f; 2]].concat(),
            [vec![t; 6], vec![f; 4], vec![f; 8], vec![t; 2]].concat(),
            0.6,
            0.75,
            2.0 / 3.0,
        ),
        (vec![t, t, t, f], vec![t, t, t, t], 1.0, 0.75, 6.0 / 7.0),
        (vec![f, f, t], vec![t, t, f], 0.0, 0.0, 0.0),
        (vec![t, f, t, f, t], vec![t, t, f, f, t], 2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0),
    ];
    for (pred, actual, p, r, f1) in cases {
        let c = Confusion::from_predictions(&pred, &actual);
        ensure!(
            c.precision() == p && c.recall() == r && c.f1() == f1,
            "metrics {:?} gave p={} r={} f1={}, expected {p} {r} {f1}",
            c,
            c.precision(),
            c.recall(),
            c.f1()
        );
    }
    Ok(format!("{checked} loss traces monotone, folds stratified, metrics exact"))
}

// 5 ---------------------------------------------------------------------

fn synthetic_end_to_end() -> Outcome {
    let synth = generate(&SynthConfig::default()).map_err(|e| e.to_string())?;
    let (matrix, diagnostics) = synth
        .dataset
        .extract(&Preset::Full.flags(), HistoryWindow::default())
        .map_err(|e| e.to_string())?;
    ensure!(diagnostics.is_empty(), "{} units not featurized", diagnostics.len());
    let f1 = |p: Preset| run_preset_on(&matrix, p, 5, 42).map(|e| e.report.mean_f1).map_err(|e| e.to_string());
    let stump = f1(Preset::FlipRate(DecayKind::ReciprocalSquared))?;
    let durations = f1(Preset::DurationBoth)?;
    let full = f1(Preset::Full)?;
    let top3 = f1(Preset::Top3)?;
    let summary = format!("stump={stump:.3} durations={durations:.3} full={full:.3} top3={top3:.3}");
    ensure!(stump < durations && durations < full, "ordering violated: {summary}");
    ensure!(full >= 0.90, "full-feature F1 below 0.90: {summary}");
    ensure!((top3 - full).abs() <= 0.05, "top-3 too far from full: {summary}");
    Ok(summary)
}

// 6 ---------------------------------------------------------------------

fn decay_ordering() -> Outcome {
    let synth = generate(&SynthConfig::recently_fixed()).map_err(|e| e.to_string())?;
    let flags = FeatureFlags::outcomes_only(vec![DecayKind::Constant, DecayKind::ReciprocalSquared], false);
    let (matrix, _) = synth
        .dataset
        .extract(&flags, HistoryWindow::default())
        .map_err(|e| e.to_string())?;
    let run = |k: DecayKind| {
        run_preset_on(&matrix, Preset::FlipRate(k), 5, 42)
            .map(|e| e.report)
            .map_err(|e| e.to_string())
    };
    let constant = run(DecayKind::Constant)?;
    let recsq = run(DecayKind::ReciprocalSquared)?;
    let (cv_c, cv_r) = (
        constant.cv_threshold.ok_or("constant stump has no threshold spread")?,
        recsq.cv_threshold.ok_or("recsq stump has no threshold spread")?,
    );
    let summary = format!(
        "F1 recsq={:.3} constant={:.3}, cv recsq={cv_r:.4} constant={cv_c:.4}",
        recsq.mean_f1, constant.mean_f1
    );
    ensure!(recsq.mean_f1 >= constant.mean_f1, "F1 ordering violated: {summary}");
    ensure!(cv_r <= cv_c, "threshold spread ordering violated: {summary}");
    Ok(summary)
}

// 7 ---------------------------------------------------------------------

fn pipeline_artifacts() -> Result<[String; 4], String> {
    let synth = generate(&SynthConfig {
        n_flaky: 40,
        n_nonflaky: 40,
        seed: 7,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let (matrix, _) = synth
        .dataset
        .extract(&Preset::Full.flags(), HistoryWindow::default())
        .map_err(|e| e.to_string())?;
    let y = matrix.required_labels().map_err(|e| e.to_string())?;
    let model = fit_gbm(&matrix.rows, &y, &matrix.schema, GbmParams::default()).map_err(|e| e.to_string())?;
    let experiment = run_preset_on(&matrix, Preset::Full, 5, 7).map_err(|e| e.to_string())?;
    let shap = tree_shap(&model, &matrix).map_err(|e| e.to_string())?;
    Ok([
        matrix.to_csv().map_err(|e| e.to_string())?,
        model.to_json().map_err(|e| e.to_string())?,
        experiment.report.to_json().map_err(|e| e.to_string())?,
        shap.matrix_csv() + &experiment.explanation.matrix_csv(),
    ])
}

fn determinism() -> Outcome {
    let a = pipeline_artifacts()?;
    let b = pipeline_artifacts()?;
    for (name, (x, y)) in ["feature matrix", "model", "report", "shap csv"].iter().zip(a.iter().zip(&b)) {
        ensure!(x == y, "{name} differs between runs");
    }
    Ok(format!("{} bytes compared", a.iter().map(String::len).sum::<usize>()))
}

// 8 ---------------------------------------------------------------------

fn read(name: &str) -> Result<Vec<u8>, String> {
    fs::read(fixture(name)).map_err(|e| format!("{name}: {e}"))
}

fn golden_files() -> Outcome {
    let xml = read("report.xml")?;
    let golden = String::from_utf8(read("report.golden.jsonl")?).map_err(|e| e.to_string())?;
    let records = parse_junit_report(&xml, 1_700_000_000).map_err(|e| e.to_string())?;
    let rendered = write_history_jsonl(&records);
    ensure!(rendered == golden, "junit output differs from golden:\n{rendered}");
    let reparsed = parse_history_jsonl(&golden).map_err(|e| e.to_string())?;
    ensure!(reparsed == records, "golden history does not parse back to the same records");

    let tsv = String::from_utf8(read("churn.tsv")?).map_err(|e| e.to_string())?;
    let golden_tsv = String::from_utf8(read("churn.golden.tsv")?).map_err(|e| e.to_string())?;
    let log = parse_churn_tsv("fixture", &tsv).map_err(|e| e.to_string())?;
    ensure!(log.to_tsv() == golden_tsv, "churn output differs from golden:\n{}", log.to_tsv());
    let again = parse_churn_tsv("fixture", &golden_tsv).map_err(|e| e.to_string())?;
    ensure!(again == log, "golden churn log does not parse back to the same log");

    let vocab: Vec<String> = ["", "cpp", "h", "md"].iter().map(|s| s.to_string()).collect();
    let counts = churn_window_counts(&log, 1_646_200_000, 3, &vocab);
    ensure!(counts.values().all(|&c| c == 1), "3-day churn counts {counts:?}");
    let counts = churn_window_counts(&log, 1_646_200_000, 1, &vocab);
    ensure!(counts.values().all(|&c| c == 0), "1-day churn counts {counts:?}");
    Ok(format!("{} junit records, {} commits", records.len(), log.commits().len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("formula suite", formula_suite, Duration::from_secs(1)),
        ("baseline oracle equivalence", baseline_oracle, Duration::from_secs(5)),
        ("shap correctness", shap_correctness, Duration::from_secs(30)),
        ("learner sanity", learner_sanity, Duration::MAX),
        ("synthetic end-to-end", synthetic_end_to_end, Duration::from_secs(120)),
        ("decay ordering", decay_ordering, Duration::MAX),
        ("determinism", determinism, Duration::MAX),
        ("parser golden files", golden_files, Duration::MAX),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > budget => Err(format!("{detail}; over the {budget:?} budget")),
            other => other,
        };
        let (status, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {}: {status} {name} ({:.2}s) {detail}", i + 1, elapsed.as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
