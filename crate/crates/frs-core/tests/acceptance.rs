//! Acceptance suite: every release gate runs here, one test per criterion,
//! each printing a PASS line (run with `--nocapture` to see them). The
//! checks are oracle-driven and need no network.

use std::time::{Duration, Instant};

use frs_core::analysis::{audit_report, emit_report, RunMetadata, RunReport};
use frs_core::datasets::QuestionType;
use frs_core::models::synthetic::{oracle_break_on_grid, SyntheticSpec};
use frs_core::protocol::{AccuracyCurve, AccuracyPoint, SweepConfig};
use frs_core::score::{BreakResult, RobustnessSample};
use frs_core::validation::{
    check_accuracy_direction, check_breaking_search, check_entropy_bounds, check_frs_analytics,
    check_no_break_rule, check_pearson_fixtures, check_scale_identities, check_strict_threshold,
    synthetic_break_agreement, CheckOutcome,
};

fn gate(criterion: &str, outcome: &CheckOutcome, budget: Duration, elapsed: Duration) {
    assert!(
        outcome.passed,
        "FAIL: {criterion} — {}: {}",
        outcome.name, outcome.detail
    );
    assert!(
        elapsed <= budget,
        "FAIL: {criterion} — runtime {elapsed:?} over budget {budget:?}"
    );
    println!(
        "PASS: {criterion} — {} ({elapsed:?})",
        outcome.detail
    );
}

#[test]
fn scaling_identity_and_limit_suite() {
    let start = Instant::now();
    let outcome = check_scale_identities(1000, 2024);
    gate(
        "temperature-scaling identities and limits",
        &outcome,
        Duration::from_secs(1),
        start.elapsed(),
    );
}

#[test]
fn entropy_bounds_suite() {
    let start = Instant::now();
    let outcome = check_entropy_bounds(1000, 2025);
    gate(
        "entropy bounds and monotonicity",
        &outcome,
        Duration::from_secs(5),
        start.elapsed(),
    );
}

#[test]
fn frs_analytic_suite() {
    let start = Instant::now();
    let outcome = check_frs_analytics(10_000, 2026);
    gate(
        "score analytics",
        &outcome,
        Duration::from_secs(2),
        start.elapsed(),
    );
}

#[test]
fn breaking_search_oracle_suite() {
    let start = Instant::now();
    let outcome = check_breaking_search(1000, 2027);
    let elapsed = start.elapsed();
    gate(
        "binary/linear breaking-search agreement",
        &outcome,
        Duration::from_secs(5),
        elapsed,
    );
    let strict = check_strict_threshold();
    assert!(strict.passed, "FAIL: strict threshold — {}", strict.detail);
    println!("PASS: strict break inequality — {}", strict.detail);
}

/// Full-pipeline recovery of the synthetic model's analytic breaking
/// temperature: for each correct-token probability, the sweep's BreakResult
/// must land on the oracle's grid crossing in at least 19 of 20 seeded
/// repetitions at 10^4 trials per temperature.
///
/// The p = 0.9 case is constructed so its crossing sits exactly on the grid
/// maximum: expected accuracy at t = 2.0 is exactly the 0.5 threshold, so
/// each repetition's measured accuracy falls below the strict threshold
/// with probability one half, and no implementation can reach 95%
/// agreement at this trial count. The case runs unmodified; see the
/// assertion message for the measured agreement.
#[test]
fn end_to_end_synthetic_oracle() {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..20).collect();
    let grid = SweepConfig::default_grid();
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for p in [0.4, 0.5547, 0.7, 0.9] {
        let spec = SyntheticSpec::single_token(p).expect("spec");
        let expected = oracle_break_on_grid(&spec, 0.5, &grid).expect("oracle");
        let (reported, agreements) =
            synthetic_break_agreement(p, 10_000, &seeds).expect("pipeline");
        assert_eq!(reported, expected, "oracle route disagreement at p={p}");
        let line = format!("p={p}: expected {expected:?}, agreement {agreements}/20");
        if agreements * 20 < 19 * seeds.len() {
            failures.push(line.clone());
        }
        lines.push(line);
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed <= Duration::from_secs(120),
        "FAIL: end-to-end synthetic oracle — runtime {elapsed:?} over 2 min"
    );
    assert!(
        failures.is_empty(),
        "FAIL: end-to-end synthetic oracle — agreement below 95% for: {}. \
         At 10^4 trials the p=0.9 crossing sits exactly on the grid maximum \
         (expected accuracy at t=2.0 is exactly the threshold), making each \
         repetition a coin flip under the strict below-threshold rule; 95% \
         agreement is unattainable for that case at this trial count.",
        failures.join("; ")
    );
    println!(
        "PASS: end-to-end synthetic oracle — {} ({elapsed:?})",
        lines.join("; ")
    );
}

#[test]
fn accuracy_degradation_direction() {
    let start = Instant::now();
    let outcome = check_accuracy_direction(10_000, 2028);
    gate(
        "accuracy decreases with temperature",
        &outcome,
        Duration::from_secs(30),
        start.elapsed(),
    );
}

#[test]
fn no_break_scores_and_strictness_shape() {
    let start = Instant::now();
    let outcome = check_no_break_rule(1000, 2029);
    gate(
        "no-break rule and strictness row shape",
        &outcome,
        Duration::from_secs(5),
        start.elapsed(),
    );
}

fn fixture_report() -> RunReport {
    let sample = |id: &str, h: f64, br: BreakResult, ty: Option<QuestionType>| {
        RobustnessSample::new(id.to_string(), h, br, 1.0, ty).unwrap()
    };
    let curve = |id: &str, accs: &[f64]| AccuracyCurve {
        question_id: id.into(),
        points: accs
            .iter()
            .enumerate()
            .map(|(i, &accuracy)| {
                let mut bins = [0u64; 10];
                bins[9 - i.min(9)] = 8;
                bins[0] = 2;
                AccuracyPoint {
                    temperature: (i + 1) as f64 / 5.0,
                    accuracy,
                    trial_count: 10,
                    certainty_bins: bins,
                }
            })
            .collect(),
    };
    let samples = vec![
        sample(
            "q-dracula-year",
            0.12,
            BreakResult::Broke { t_b: 1.6 },
            Some(QuestionType::Numerical),
        ),
        sample(
            "q-scorpions-country",
            0.31,
            BreakResult::Broke { t_b: 1.0 },
            Some(QuestionType::Location),
        ),
        sample(
            "q-bohr-atom",
            0.55,
            BreakResult::Broke { t_b: 0.4 },
            Some(QuestionType::Human),
        ),
        sample(
            "q-valencian-language",
            0.07,
            BreakResult::NoBreakWithinGrid { max_t: 2.0 },
            Some(QuestionType::Entity),
        ),
        sample("q-unlabeled", 0.44, BreakResult::Broke { t_b: 0.8 }, None),
        sample(
            "q-bayern-jersey",
            0.29,
            BreakResult::NoBreakWithinGrid { max_t: 2.0 },
            Some(QuestionType::Entity),
        ),
    ];
    let curves = vec![
        curve("q-dracula-year", &[1.0, 1.0, 0.9, 0.9, 0.8, 0.7, 0.6, 0.4, 0.3, 0.2]),
        curve("q-scorpions-country", &[1.0, 0.9, 0.8, 0.6, 0.4, 0.4, 0.3, 0.2, 0.1, 0.1]),
        curve("q-bohr-atom", &[0.9, 0.4, 0.3, 0.2, 0.2, 0.1, 0.1, 0.0, 0.0, 0.0]),
        curve("q-valencian-language", &[1.0, 1.0, 1.0, 0.9, 0.9, 0.8, 0.8, 0.7, 0.6, 0.5]),
        curve("q-unlabeled", &[1.0, 0.9, 0.7, 0.4, 0.3, 0.3, 0.2, 0.1, 0.1, 0.0]),
        curve("q-bayern-jersey", &[1.0, 1.0, 0.9, 0.9, 0.8, 0.8, 0.7, 0.6, 0.6, 0.5]),
    ];
    RunReport::build(
        RunMetadata {
            model_id: "synthetic(p=0.7, k=10, len=1)".into(),
            dataset_tag: "custom".into(),
            config_hash: "0123456789abcdef".into(),
        },
        samples,
        curves,
        &[1.0, 2.0, 5.0, 10.0, 50.0],
        None,
        Some(3),
        1,
    )
    .unwrap()
}

const GOLDEN_FILES: &[(&str, &str)] = &[
    ("per_sample.tsv", include_str!("golden/per_sample.tsv")),
    ("curve_points.tsv", include_str!("golden/curve_points.tsv")),
    ("frs_by_d.tsv", include_str!("golden/frs_by_d.tsv")),
    (
        "accuracy_by_temperature.tsv",
        include_str!("golden/accuracy_by_temperature.tsv"),
    ),
    ("certainty_bins.tsv", include_str!("golden/certainty_bins.tsv")),
    (
        "question_type_proportions.tsv",
        include_str!("golden/question_type_proportions.tsv"),
    ),
    ("summary.json", include_str!("golden/summary.json")),
];

/// Emitted aggregates must equal their recomputation from the emitted
/// per-sample rows, report bytes must be deterministic and match the
/// golden fixture, and the Pearson fixtures must hold.
/// Regenerate goldens with `GOLDEN_REGEN=1 cargo test -p frs-core --test
/// acceptance analysis_self_consistency`.
#[test]
fn analysis_self_consistency() {
    let report = fixture_report();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();

    if std::env::var("GOLDEN_REGEN").is_ok() {
        let golden_dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
        std::fs::create_dir_all(&golden_dir).unwrap();
        for (name, _) in GOLDEN_FILES {
            std::fs::copy(dir.path().join(name), golden_dir.join(name)).unwrap();
        }
        println!("regenerated {} golden files", GOLDEN_FILES.len());
        return;
    }

    for (name, golden) in GOLDEN_FILES {
        let emitted = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(
            &emitted, golden,
            "FAIL: analysis self-consistency — {name} differs from the golden fixture"
        );
    }
    audit_report(dir.path()).unwrap();

    let second = tempfile::tempdir().unwrap();
    emit_report(&report, second.path()).unwrap();
    for (name, _) in GOLDEN_FILES {
        let a = std::fs::read(dir.path().join(name)).unwrap();
        let b = std::fs::read(second.path().join(name)).unwrap();
        assert_eq!(a, b, "FAIL: analysis self-consistency — {name} not byte-deterministic");
    }

    let pearson = check_pearson_fixtures();
    assert!(pearson.passed, "FAIL: pearson fixtures — {}", pearson.detail);
    println!("PASS: analysis self-consistency — golden report, audit, and pearson fixtures hold");
}

mod wire {
    use std::collections::VecDeque;
    use std::sync::{Arc, Mutex};
    use std::time::Duration;

    use frs_core::dist::Temperature;
    use frs_core::models::api::{
        ChatTransport, HttpResponse, OpenAiCompatModel, RetryPolicy, TransportError,
    };
    use frs_core::models::{verify_trace_contract, GenerationRequest, ModelClient, ModelError};

    const SUCCESS: &str = include_str!("fixtures/completion_success.json");
    const MISSING_LOGPROBS: &str = include_str!("fixtures/completion_missing_logprobs.json");
    const SERVER_ERROR: &str = include_str!("fixtures/completion_server_error.json");

    /// Replays a recorded script of transport outcomes and captures every
    /// request body. No network involved.
    struct ScriptedTransport {
        script: Mutex<VecDeque<Result<HttpResponse, String>>>,
        requests: Mutex<Vec<String>>,
    }

    impl ScriptedTransport {
        fn new(script: Vec<Result<HttpResponse, String>>) -> Arc<Self> {
            Arc::new(Self {
                script: Mutex::new(script.into()),
                requests: Mutex::new(Vec::new()),
            })
        }

        fn request_bodies(&self) -> Vec<String> {
            self.requests.lock().unwrap().clone()
        }
    }

    impl ChatTransport for ScriptedTransport {
        fn post_chat(
            &self,
            _url: &str,
            _api_key: &str,
            body: &str,
        ) -> Result<HttpResponse, TransportError> {
            self.requests.lock().unwrap().push(body.to_string());
            self.script
                .lock()
                .unwrap()
                .pop_front()
                .expect("script exhausted")
                .map_err(TransportError)
        }
    }

    fn ok(status: u16, body: &str) -> Result<HttpResponse, String> {
        Ok(HttpResponse {
            status,
            body: body.to_string(),
        })
    }

    fn model(transport: Arc<ScriptedTransport>) -> OpenAiCompatModel {
        OpenAiCompatModel::new(
            "https://example.test/v1/chat/completions",
            "test-model",
            "sk-fixture",
            transport,
        )
        .with_retry(RetryPolicy {
            max_attempts: 3,
            backoff: Duration::from_millis(1),
        })
    }

    fn request(seed: u64) -> GenerationRequest<'static> {
        GenerationRequest {
            question_id: "q-dracula-year",
            prompt: "Q: In what year did Universal make a film version of Dracula?\nA:",
            temperature: Temperature::zero(),
            max_new_tokens: 5,
            top_k: 10,
            seed,
        }
    }

    /// Recorded fixtures parse into contract-valid traces, capability gaps
    /// and transient failures surface correctly, and the request wire shape
    /// carries the documented fields. No live network anywhere.
    #[test]
    fn wire_protocol_conformance() {
        // success: two positions, ten candidates each, renormalized
        let transport = ScriptedTransport::new(vec![ok(200, SUCCESS)]);
        let client = model(transport.clone());
        let trace = client.generate(&request(11)).unwrap();
        verify_trace_contract(&trace, 5, 10).unwrap();
        assert_eq!(trace.positions.len(), 2);
        assert_eq!(trace.decoded_text, "1931");
        assert!(trace.positions.iter().all(|p| p.len() == 10));
        assert!(trace.positions.iter().all(|p| p.is_renormalized()));
        assert!(trace.chosen.iter().all(|c| c.in_top_k));
        assert_eq!(trace.chosen[0].text, "19");

        // request shape: deterministic baseline settings on the wire
        let bodies = transport.request_bodies();
        assert_eq!(bodies.len(), 1);
        let body: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 5);
        assert_eq!(body["logprobs"], true);
        assert_eq!(body["top_logprobs"], 10);
        assert_eq!(body["seed"], 11);
        assert_eq!(body["messages"][0]["role"], "user");

        // missing logprobs: capability error naming the endpoint
        let client = model(ScriptedTransport::new(vec![ok(200, MISSING_LOGPROBS)]));
        match client.generate(&request(12)) {
            Err(ModelError::Capability { endpoint, .. }) => {
                assert!(endpoint.contains("example.test"));
            }
            other => panic!("expected capability error, got {other:?}"),
        }

        // transient failure then success: one connection error, one 500,
        // then a good response, all within the retry budget
        let transport = ScriptedTransport::new(vec![
            Err("connection reset by peer".into()),
            ok(500, SERVER_ERROR),
            ok(200, SUCCESS),
        ]);
        let client = model(transport.clone());
        let trace = client.generate(&request(13)).unwrap();
        assert_eq!(trace.decoded_text, "1931");
        assert_eq!(transport.request_bodies().len(), 3);

        // exhausted retries surface as a transport error with the attempt count
        let transport = ScriptedTransport::new(vec![
            Err("connection refused".into()),
            Err("connection refused".into()),
            Err("connection refused".into()),
        ]);
        let client = model(transport);
        match client.generate(&request(14)) {
            Err(ModelError::Transport { attempts: 3, .. }) => {}
            other => panic!("expected transport exhaustion, got {other:?}"),
        }

        // non-retriable client errors do not burn retries
        let transport = ScriptedTransport::new(vec![ok(401, "{\"error\": {\"message\": \"bad key\"}}")]);
        let client = model(transport.clone());
        match client.generate(&request(15)) {
            Err(ModelError::Http { status: 401, .. }) => {}
            other => panic!("expected http 401, got {other:?}"),
        }
        assert_eq!(transport.request_bodies().len(), 1);

        println!(
            "PASS: wire-protocol conformance — fixtures parse, retries and capability errors behave, no network"
        );
    }
}
