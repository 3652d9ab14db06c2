//! Analytic synthetic backend: one correct token with probability `p`, the
//! remaining mass uniform over `k - 1` alternatives, repeated for each
//! answer position. Its correct-rate under temperature scaling has a closed
//! form, which makes it the reference oracle for the whole pipeline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{sample_scaled, scale, AnswerTrace, ChosenToken, TokenDistribution};
use crate::models::{GenerationRequest, ModelClient, ModelError};
use crate::score::BreakResult;

/// Token text of the correct answer at each position. The alternatives are
/// `alt1` .. `alt9`; no token is a substring of another, so containment
/// scoring never creates accidental matches.
pub const CORRECT_TOKEN: &str = "gold";

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("correct-token probability {p} is not above uniform chance 1/{k}; accuracy never reaches the threshold")]
    NeverAboveThreshold { p: f64, k: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

/// Parameters of the synthetic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Probability of the correct token at each position, in (0, 1).
    pub correct_token_prob: f64,
    /// Number of candidate tokens per position (2..=10).
    pub candidate_count: usize,
    /// Number of answer positions.
    pub answer_length: usize,
}

impl SyntheticSpec {
    pub fn new(
        correct_token_prob: f64,
        candidate_count: usize,
        answer_length: usize,
    ) -> Result<Self, OracleError> {
        if !(correct_token_prob > 0.0 && correct_token_prob < 1.0) {
            return Err(OracleError::InvalidSpec(format!(
                "correct_token_prob {correct_token_prob} outside (0, 1)"
            )));
        }
        if !(2..=10).contains(&candidate_count) {
            return Err(OracleError::InvalidSpec(format!(
                "candidate_count {candidate_count} outside 2..=10"
            )));
        }
        if answer_length == 0 {
            return Err(OracleError::InvalidSpec("answer_length must be >= 1".into()));
        }
        Ok(Self {
            correct_token_prob,
            candidate_count,
            answer_length,
        })
    }

    pub fn single_token(correct_token_prob: f64) -> Result<Self, OracleError> {
        Self::new(correct_token_prob, 10, 1)
    }

    /// The model's intrinsic per-position distribution.
    pub fn base_distribution(&self) -> TokenDistribution {
        let rest = (1.0 - self.correct_token_prob) / (self.candidate_count - 1) as f64;
        let mut pairs = vec![(CORRECT_TOKEN.to_string(), self.correct_token_prob)];
        for i in 1..self.candidate_count {
            pairs.push((format!("alt{i}"), rest));
        }
        TokenDistribution::from_probabilities(pairs).expect("spec validated at construction")
    }

    /// The ground-truth answer: the correct token at every position.
    pub fn gold_answer(&self) -> String {
        CORRECT_TOKEN.repeat(self.answer_length)
    }

    /// Expected probability that one position samples the correct token at
    /// temperature `t > 0` (closed form of the scaled distribution).
    pub fn per_position_correct_rate(&self, t: f64) -> f64 {
        let p = self.correct_token_prob;
        let k = self.candidate_count as f64;
        let rest = (1.0 - p) / (k - 1.0);
        let a = p.powf(1.0 / t);
        let b = rest.powf(1.0 / t);
        a / (a + (k - 1.0) * b)
    }

    /// Expected trial accuracy at temperature `t`: every position must stay
    /// on the correct token for the answer to contain the gold string.
    pub fn expected_accuracy(&self, t: f64) -> f64 {
        self.per_position_correct_rate(t)
            .powi(self.answer_length as i32)
    }
}

/// The synthetic backend.
pub struct SyntheticModel {
    spec: SyntheticSpec,
    base: TokenDistribution,
}

impl SyntheticModel {
    pub fn new(spec: SyntheticSpec) -> Self {
        let base = spec.base_distribution();
        Self { spec, base }
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }
}

impl ModelClient for SyntheticModel {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<AnswerTrace, ModelError> {
        let scaled = scale(&self.base, request.temperature)?;
        let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
        let length = self.spec.answer_length.min(request.max_new_tokens);
        let mut positions = Vec::with_capacity(length);
        let mut chosen = Vec::with_capacity(length);
        let mut decoded = String::new();
        for _ in 0..length {
            let text = sample_scaled(&scaled, &mut rng);
            let log_prob = scaled
                .probability_of(&text)
                .expect("sampled token is a candidate")
                .ln();
            decoded.push_str(&text);
            positions.push(self.base.clone());
            chosen.push(ChosenToken {
                text,
                log_prob,
                in_top_k: true,
            });
        }
        Ok(AnswerTrace::new(positions, chosen, decoded)?)
    }

    fn reports_top_logprobs(&self) -> bool {
        true
    }

    fn deterministic_at_t0(&self) -> bool {
        true
    }

    fn id(&self) -> String {
        format!(
            "synthetic(p={}, k={}, len={})",
            self.spec.correct_token_prob, self.spec.candidate_count, self.spec.answer_length
        )
    }
}

/// Temperature at which the expected accuracy crosses `threshold`.
///
/// Single-token answers use the closed form
/// `t* = ln((k-1) p / (1-p)) / ln(k-1)`; longer answers solve
/// `per_position_rate(t)^L = threshold` by bisection to 1e-6. Requires the
/// correct token to beat uniform chance, otherwise accuracy never reaches
/// the threshold at any temperature.
pub fn synth_break_oracle(spec: &SyntheticSpec, threshold: f64) -> Result<f64, OracleError> {
    let p = spec.correct_token_prob;
    let k = spec.candidate_count;
    if p <= 1.0 / k as f64 {
        return Err(OracleError::NeverAboveThreshold { p, k });
    }
    if spec.answer_length == 1 {
        let km1 = (k - 1) as f64;
        // closed form is exact for the default threshold of one half; other
        // thresholds shift the crossing, so fall back to bisection
        if (threshold - 0.5).abs() < 1e-12 {
            return Ok((km1 * p / (1.0 - p)).ln() / km1.ln());
        }
    }
    break_temperature_by_bisection(spec, threshold)
}

/// Independent route to the breaking temperature: bisect
/// `expected_accuracy(t) = threshold` to a width of 1e-6. Used to
/// cross-check the closed form and the measured pipeline.
pub fn break_temperature_by_bisection(
    spec: &SyntheticSpec,
    threshold: f64,
) -> Result<f64, OracleError> {
    let p = spec.correct_token_prob;
    let k = spec.candidate_count;
    if p <= 1.0 / k as f64 {
        return Err(OracleError::NeverAboveThreshold { p, k });
    }
    // expected accuracy tends to (1/k)^L as t grows; a crossing exists only
    // if the threshold sits above that floor
    let floor = (1.0 / k as f64).powi(spec.answer_length as i32);
    if threshold <= floor {
        return Err(OracleError::NeverAboveThreshold { p, k });
    }
    let mut lo = 1e-9;
    let mut hi = 1.0;
    while spec.expected_accuracy(hi) >= threshold {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(OracleError::NeverAboveThreshold { p, k });
        }
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if spec.expected_accuracy(mid) >= threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// What a sweep over `grid` should report for this spec: the first grid
/// temperature strictly above the oracle crossing, or no break when the
/// crossing sits at or beyond the grid maximum.
///
/// Uses [`synth_break_oracle`], whose closed form is exact at the grid
/// boundary (a bisection bracket of width 1e-6 could fall on the wrong side
/// of a grid point that coincides with the true crossing).
pub fn oracle_break_on_grid(
    spec: &SyntheticSpec,
    threshold: f64,
    grid: &[f64],
) -> Result<BreakResult, OracleError> {
    let t_star = synth_break_oracle(spec, threshold)?;
    for &t in grid {
        if t > t_star {
            return Ok(BreakResult::Broke { t_b: t });
        }
    }
    Ok(BreakResult::NoBreakWithinGrid {
        max_t: *grid.last().expect("grid non-empty"),
    })
}
