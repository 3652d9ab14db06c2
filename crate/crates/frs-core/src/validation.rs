//! Self-contained correctness checks runnable without a network: scaling
//! identities, entropy bounds, score analytics, breaking-search agreement,
//! and end-to-end recovery of the synthetic model's known breaking
//! temperature. The `validate` command runs these at runtime; the
//! acceptance test suite runs the same checks at full scale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{aggregate_frs, pearson, AnalysisError};
use crate::datasets::{DatasetTag, PromptTemplate, QaRecord};
use crate::dist::{entropy, renormalize, scale, Temperature, TokenDistribution};
use crate::models::synthetic::{
    break_temperature_by_bisection, oracle_break_on_grid, synth_break_oracle, SyntheticModel,
    SyntheticSpec,
};
use crate::protocol::{
    find_breaking_binary_with, find_breaking_linear, select_baseline, sweep, AccuracyCurve,
    AccuracyPoint, SweepConfig, SweepMode,
};
use crate::score::{frs_for_sample, frs_raw, frs_scaled, BreakResult, RobustnessSample};

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn pass(name: &'static str, detail: impl Into<String>) -> Self {
        Self {
            name,
            passed: true,
            detail: detail.into(),
        }
    }

    fn fail(name: &'static str, detail: impl Into<String>) -> Self {
        Self {
            name,
            passed: false,
            detail: detail.into(),
        }
    }
}

fn random_distribution(rng: &mut ChaCha8Rng) -> TokenDistribution {
    let n = rng.random_range(1..=10usize);
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(1e-6..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let dist = TokenDistribution::from_probabilities(
        weights
            .iter()
            .enumerate()
            .map(|(i, w)| (format!("t{i}"), w / total)),
    )
    .expect("valid random distribution");
    renormalize(&dist).expect("renormalizes")
}

/// Temperature-scaling identities: `scale(d, 1) == d` within 1e-9, `t = 0`
/// collapses to the argmax one-hot, and scaled masses sum to 1.
pub fn check_scale_identities(n_dists: usize, seed: u64) -> CheckOutcome {
    const NAME: &str = "scale identities (t=1 fixpoint, t=0 argmax, unit mass)";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = SweepConfig::default_grid();
    for i in 0..n_dists {
        let d = random_distribution(&mut rng);
        let unit = scale(&d, Temperature::new(1.0).unwrap()).expect("scale at 1");
        for (a, b) in d.probabilities().zip(unit.probabilities()) {
            if (a - b).abs() > 1e-9 {
                return CheckOutcome::fail(
                    NAME,
                    format!("case {i}: scale(d, 1) moved a probability by {}", (a - b).abs()),
                );
            }
        }
        let zero = scale(&d, Temperature::zero()).expect("scale at 0");
        if zero.argmax().token_text != d.argmax().token_text
            || (zero.argmax().probability() - 1.0).abs() > 0.0
        {
            return CheckOutcome::fail(NAME, format!("case {i}: t=0 is not the argmax one-hot"));
        }
        for &t in &grid {
            let s = scale(&d, Temperature::new(t).unwrap()).expect("scale");
            let sum: f64 = s.probabilities().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return CheckOutcome::fail(
                    NAME,
                    format!("case {i}: mass {sum} at t={t} is off unity"),
                );
            }
        }
    }
    CheckOutcome::pass(NAME, format!("{n_dists} randomized distributions"))
}

/// Entropy stays in `[0, 1]`, hits the bounds exactly on the uniform-10 and
/// one-hot shapes, and never decreases as temperature rises.
pub fn check_entropy_bounds(n_dists: usize, seed: u64) -> CheckOutcome {
    const NAME: &str = "entropy bounds and monotonicity in temperature";
    let uniform = TokenDistribution::uniform(10).expect("uniform");
    if entropy(&uniform).expect("entropy") != 1.0 {
        return CheckOutcome::fail(NAME, "uniform-10 entropy is not exactly 1.0".to_string());
    }
    let one_hot = TokenDistribution::from_probabilities([("a", 1.0)]).expect("one-hot");
    if entropy(&one_hot).expect("entropy") != 0.0 {
        return CheckOutcome::fail(NAME, "one-hot entropy is not exactly 0.0".to_string());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = SweepConfig::default_grid();
    for i in 0..n_dists {
        let d = random_distribution(&mut rng);
        let mut last = -1.0f64;
        for &t in &grid {
            let s = scale(&d, Temperature::new(t).unwrap()).expect("scale");
            let h = entropy(&s).expect("entropy");
            if !(0.0..=1.0).contains(&h) {
                return CheckOutcome::fail(NAME, format!("case {i}: entropy {h} out of range"));
            }
            if h < last - 1e-9 {
                return CheckOutcome::fail(
                    NAME,
                    format!("case {i}: entropy fell from {last} to {h} at t={t}"),
                );
            }
            last = h;
        }
    }
    CheckOutcome::pass(NAME, format!("{n_dists} randomized distributions over the grid"))
}

/// Analytic properties of the raw and scaled scores.
pub fn check_frs_analytics(n_triples: usize, seed: u64) -> CheckOutcome {
    const NAME: &str = "frs analytics (endpoints, 1-2h line, monotonicities, scaling)";
    if frs_raw(0.0, 1.0, 0.0).unwrap() != 1.0 {
        return CheckOutcome::fail(NAME, "frs_raw(0,1,0) is not 1".to_string());
    }
    if frs_raw(1.0, 1.0, 0.0).unwrap() != -1.0 {
        return CheckOutcome::fail(NAME, "frs_raw(1,1,0) is not -1".to_string());
    }
    for i in 0..=100 {
        let h = i as f64 / 100.0;
        let f = frs_raw(h, 1.0, 0.0).unwrap();
        if (f - (1.0 - 2.0 * h)).abs() > 1e-12 {
            return CheckOutcome::fail(NAME, format!("frs_raw({h},1,0) != 1-2h"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n_triples {
        let h = rng.random_range(0.0..=1.0);
        let d = rng.random_range(1.0..=50.0);
        let t_b = rng.random_range(0.0..=2.0);
        let f = frs_raw(h, d, t_b).unwrap();
        if f < -1.0 {
            return CheckOutcome::fail(NAME, format!("case {i}: raw score {f} below -1"));
        }
        // strictly increasing in breaking temperature
        if frs_raw(h, d, t_b + 0.1).unwrap() <= f {
            return CheckOutcome::fail(
                NAME,
                format!("case {i}: raw score not increasing in t_b at ({h},{d},{t_b})"),
            );
        }
        // strictly decreasing in entropy away from the ends
        if h > 0.005 && h < 0.995 && frs_raw(h + 0.005, d, t_b).unwrap() >= f {
            return CheckOutcome::fail(
                NAME,
                format!("case {i}: raw score not decreasing in entropy at ({h},{d},{t_b})"),
            );
        }
        // non-increasing in strictness for interior entropy
        if h > 1e-9 && h < 1.0 - 1e-9 && frs_raw(h, d + 1.0, t_b).unwrap() > f + 1e-12 {
            return CheckOutcome::fail(
                NAME,
                format!("case {i}: raw score increased with strictness at ({h},{d},{t_b})"),
            );
        }
        let s = frs_scaled(h, d, t_b).unwrap();
        if !(0.0..1.0).contains(&s) {
            return CheckOutcome::fail(NAME, format!("case {i}: scaled score {s} outside [0,1)"));
        }
        // order preservation of the monotone transform
        let h2 = rng.random_range(0.0..=1.0);
        let d2 = rng.random_range(1.0..=50.0);
        let t2 = rng.random_range(0.0..=2.0);
        let f2 = frs_raw(h2, d2, t2).unwrap();
        let s2 = frs_scaled(h2, d2, t2).unwrap();
        if (f < f2 && s >= s2) || (f > f2 && s <= s2) {
            return CheckOutcome::fail(NAME, format!("case {i}: scaled score broke ordering"));
        }
    }
    CheckOutcome::pass(NAME, format!("{n_triples} randomized (h, d, t_b) triples"))
}

fn deterministic_curve(grid: &[f64], accs: &[f64]) -> AccuracyCurve {
    AccuracyCurve {
        question_id: "check".into(),
        points: accs
            .iter()
            .zip(grid)
            .map(|(&accuracy, &temperature)| AccuracyPoint {
                temperature,
                accuracy,
                trial_count: 1,
                certainty_bins: [0; 10],
            })
            .collect(),
    }
}

/// Binary search agrees with the linear scan on every monotone
/// non-increasing curve and stays within its probe budget.
pub fn check_breaking_search(n_random: usize, seed: u64) -> CheckOutcome {
    const NAME: &str = "breaking search: binary equals linear on monotone curves";
    let grid = SweepConfig::default_grid();
    let probe_budget = (grid.len() as f64).log2().ceil() as usize + 1;
    let run = |accs: &[f64], label: String| -> Option<CheckOutcome> {
        let linear = find_breaking_linear(&deterministic_curve(&grid, accs), 0.5).unwrap();
        let (binary, _, evals) = find_breaking_binary_with::<std::convert::Infallible>(
            &grid,
            0.5,
            |i| {
                Ok(AccuracyPoint {
                    temperature: grid[i],
                    accuracy: accs[i],
                    trial_count: 1,
                    certainty_bins: [0; 10],
                })
            },
        )
        .unwrap();
        if binary != linear {
            return Some(CheckOutcome::fail(
                NAME,
                format!("{label}: binary {binary:?} vs linear {linear:?}"),
            ));
        }
        if evals > probe_budget {
            return Some(CheckOutcome::fail(
                NAME,
                format!("{label}: used {evals} probes, budget {probe_budget}"),
            ));
        }
        None
    };
    for crossing in 0..=grid.len() {
        let accs: Vec<f64> = (0..grid.len())
            .map(|i| if i < crossing { 1.0 } else { 0.0 })
            .collect();
        if let Some(fail) = run(&accs, format!("step curve crossing at {crossing}")) {
            return fail;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n_random {
        let mut accs: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(0.0..=1.0)).collect();
        accs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if let Some(fail) = run(&accs, format!("random monotone curve {i}")) {
            return fail;
        }
    }
    CheckOutcome::pass(
        NAME,
        format!(
            "{} step curves and {n_random} random monotone curves, <= {probe_budget} probes",
            grid.len() + 1
        ),
    )
}

/// Accuracy sitting exactly at the threshold must not count as broken.
pub fn check_strict_threshold() -> CheckOutcome {
    const NAME: &str = "strict break inequality (accuracy == threshold does not break)";
    let grid = SweepConfig::default_grid();
    let at_threshold = deterministic_curve(&grid, &[0.5; 10]);
    match find_breaking_linear(&at_threshold, 0.5).unwrap() {
        BreakResult::NoBreakWithinGrid { .. } => {}
        BreakResult::Broke { t_b } => {
            return CheckOutcome::fail(
                NAME,
                format!("curve pinned at the threshold reported a break at {t_b}"),
            )
        }
    }
    let mut below = [0.5; 10];
    below[6] = 0.5 - 1e-9;
    match find_breaking_linear(&deterministic_curve(&grid, &below), 0.5).unwrap() {
        BreakResult::Broke { t_b } if (t_b - grid[6]).abs() < 1e-12 => {}
        other => {
            return CheckOutcome::fail(
                NAME,
                format!("curve dipping under the threshold reported {other:?}"),
            )
        }
    }
    CheckOutcome::pass(NAME, "threshold boundary handled strictly")
}

/// Drive the full pipeline (baseline selection, seeded trials, linear
/// breaking search) over the synthetic model and compare against the
/// independent oracle's grid crossing. Returns the per-seed agreement.
pub fn synthetic_break_agreement(
    p: f64,
    trials: usize,
    run_seeds: &[u64],
) -> Result<(BreakResult, usize), String> {
    let spec = SyntheticSpec::single_token(p).map_err(|e| e.to_string())?;
    let grid = SweepConfig::default_grid();
    let expected = oracle_break_on_grid(&spec, 0.5, &grid).map_err(|e| e.to_string())?;
    // dual route: the closed form and the bisection must agree on the
    // crossing temperature itself
    let closed = synth_break_oracle(&spec, 0.5).map_err(|e| e.to_string())?;
    let bisected = break_temperature_by_bisection(&spec, 0.5).map_err(|e| e.to_string())?;
    if (closed - bisected).abs() > 1e-5 {
        return Err(format!(
            "oracle routes disagree: closed form {closed} vs bisection {bisected}"
        ));
    }
    let mut agreements = 0usize;
    for &run_seed in run_seeds {
        let measured = measured_break(&spec, trials, run_seed)?;
        if measured == expected {
            agreements += 1;
        }
    }
    Ok((expected, agreements))
}

/// One full pipeline pass for a synthetic spec at the given trial count.
pub fn measured_break(
    spec: &SyntheticSpec,
    trials: usize,
    run_seed: u64,
) -> Result<BreakResult, String> {
    let model = SyntheticModel::new(*spec);
    let template = PromptTemplate::default();
    let config = SweepConfig {
        trials_per_temperature: trials,
        run_seed,
        concurrency_limit: 1,
        ..SweepConfig::default()
    };
    let record = QaRecord {
        question_id: format!("synthetic-p{}", spec.correct_token_prob),
        question: "synthetic probe".into(),
        gold_answers: vec![spec.gold_answer()],
        dataset_tag: DatasetTag::Custom,
        question_type: None,
    };
    let selection = select_baseline(&model, [record], &template, &config, 1)
        .map_err(|e| e.to_string())?;
    if selection.samples.len() != 1 {
        return Err("baseline selection dropped the synthetic sample".into());
    }
    let output = sweep(
        &model,
        &selection.samples,
        &template,
        &config,
        SweepMode::Linear,
        &[1.0],
        None,
    )
    .map_err(|e| e.to_string())?;
    if !output.quarantined.is_empty() {
        return Err(format!("sweep quarantined: {}", output.quarantined[0].error));
    }
    Ok(output.samples[0].break_result)
}

/// End-to-end synthetic recovery for the validate command: robust spec
/// points whose oracle crossing sits far from any grid boundary.
pub fn check_synthetic_recovery(trials: usize, run_seeds: &[u64]) -> CheckOutcome {
    const NAME: &str = "synthetic end-to-end break recovery";
    let mut details = Vec::new();
    for p in [0.4, 0.5547] {
        match synthetic_break_agreement(p, trials, run_seeds) {
            Ok((expected, agreements)) => {
                if agreements < run_seeds.len() {
                    return CheckOutcome::fail(
                        NAME,
                        format!(
                            "p={p}: only {agreements}/{} runs recovered {expected:?}",
                            run_seeds.len()
                        ),
                    );
                }
                details.push(format!("p={p} -> {expected:?}"));
            }
            Err(e) => return CheckOutcome::fail(NAME, format!("p={p}: {e}")),
        }
    }
    CheckOutcome::pass(
        NAME,
        format!(
            "{} ({} seeds, {trials} trials per temperature)",
            details.join(", "),
            run_seeds.len()
        ),
    )
}

/// Mean synthetic accuracy is monotone non-increasing across the grid
/// within sampling noise.
pub fn check_accuracy_direction(trials: usize, run_seed: u64) -> CheckOutcome {
    const NAME: &str = "accuracy degrades with temperature (within noise)";
    let spec = SyntheticSpec::single_token(0.7).expect("spec");
    let model = SyntheticModel::new(spec);
    let template = PromptTemplate::default();
    let config = SweepConfig {
        trials_per_temperature: trials,
        run_seed,
        concurrency_limit: 1,
        ..SweepConfig::default()
    };
    let record = QaRecord {
        question_id: "direction".into(),
        question: "synthetic probe".into(),
        gold_answers: vec![spec.gold_answer()],
        dataset_tag: DatasetTag::Custom,
        question_type: None,
    };
    let selection =
        select_baseline(&model, [record], &template, &config, 1).expect("selection");
    let output = sweep(
        &model,
        &selection.samples,
        &template,
        &config,
        SweepMode::Linear,
        &[1.0],
        None,
    )
    .expect("sweep");
    let points = &output.curves[0].points;
    for pair in points.windows(2) {
        if pair[1].accuracy > pair[0].accuracy + 0.02 {
            return CheckOutcome::fail(
                NAME,
                format!(
                    "accuracy rose from {} at t={} to {} at t={}",
                    pair[0].accuracy, pair[0].temperature, pair[1].accuracy, pair[1].temperature
                ),
            );
        }
    }
    // and it matches the closed form pointwise
    for point in points {
        let expected = spec.expected_accuracy(point.temperature);
        if (point.accuracy - expected).abs() > 0.02 {
            return CheckOutcome::fail(
                NAME,
                format!(
                    "accuracy {} at t={} is off the closed form {expected}",
                    point.accuracy, point.temperature
                ),
            );
        }
    }
    CheckOutcome::pass(NAME, format!("monotone within 0.02 at {trials} trials"))
}

/// Samples that never broke score exactly 1 at every strictness, and mean
/// scores never increase with strictness.
pub fn check_no_break_rule(n_samples: usize, seed: u64) -> CheckOutcome {
    const NAME: &str = "no-break rule (score 1 at every d, means non-increasing in d)";
    let d_values = [1.0, 2.0, 5.0, 10.0, 50.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let h = rng.random_range(0.0..=1.0);
        let break_result = if rng.random_bool(0.3) {
            BreakResult::NoBreakWithinGrid { max_t: 2.0 }
        } else {
            BreakResult::Broke {
                t_b: 0.2 * rng.random_range(1..=10) as f64,
            }
        };
        for &d in &d_values {
            let frs = frs_for_sample(h, d, break_result).unwrap();
            if !break_result.broke() && frs != 1.0 {
                return CheckOutcome::fail(
                    NAME,
                    format!("no-break sample scored {frs} at d={d}"),
                );
            }
        }
        samples.push(
            RobustnessSample::new(format!("s{i}"), h, break_result, 1.0, None).unwrap(),
        );
    }
    let table = aggregate_frs(&samples, &d_values).expect("aggregate");
    for pair in table.windows(2) {
        if pair[1].1 > pair[0].1 + 1e-12 {
            return CheckOutcome::fail(
                NAME,
                format!(
                    "mean rose from {} at d={} to {} at d={}",
                    pair[0].1, pair[0].0, pair[1].1, pair[1].0
                ),
            );
        }
    }
    CheckOutcome::pass(NAME, format!("{n_samples} randomized samples"))
}

/// Pearson fixtures: perfect lines hit the bounds, degenerate input errors.
pub fn check_pearson_fixtures() -> CheckOutcome {
    const NAME: &str = "pearson fixtures (perfect lines, degenerate inputs)";
    if pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() != 1.0 {
        return CheckOutcome::fail(NAME, "ascending line is not exactly 1".to_string());
    }
    if pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap() != -1.0 {
        return CheckOutcome::fail(NAME, "descending line is not exactly -1".to_string());
    }
    match pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]) {
        Err(AnalysisError::Degenerate(_)) => {}
        other => return CheckOutcome::fail(NAME, format!("constant input gave {other:?}")),
    }
    CheckOutcome::pass(NAME, "fixtures hold")
}

/// The standard suite at validate-command scale. Network-free.
pub fn run_all_checks() -> Vec<CheckOutcome> {
    vec![
        check_scale_identities(1000, 101),
        check_entropy_bounds(1000, 102),
        check_frs_analytics(10_000, 103),
        check_breaking_search(1000, 104),
        check_strict_threshold(),
        check_no_break_rule(500, 105),
        check_pearson_fixtures(),
        check_accuracy_direction(10_000, 106),
        check_synthetic_recovery(10_000, &[1, 2, 3]),
    ]
}
