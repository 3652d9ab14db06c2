//! Token probability distributions: temperature scaling, seeded sampling,
//! base-10 entropy, and per-answer trace statistics.
//!
//! Probabilities are stored as natural-log values (the wire format of
//! logprob-reporting endpoints); entropy converts to base 10 so that a
//! uniform distribution over the 10 retained candidates scores exactly 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Top-k candidate lists are capped at 10 so the entropy bound stays at 1.
pub const MAX_CANDIDATES: usize = 10;

/// Tolerance for treating a candidate list as summing to 1.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DistributionError {
    #[error("candidate list is empty")]
    Empty,
    #[error("{0} candidates exceed the supported maximum of {MAX_CANDIDATES}")]
    TooManyCandidates(usize),
    #[error("log-probability {0} for token {1:?} is not a valid log of a probability")]
    InvalidLogProb(f64, String),
    #[error("no candidate has a finite log-probability")]
    NoFiniteMass,
    #[error("distribution must be renormalized before {0}")]
    NotRenormalized(&'static str),
    #[error("temperature {0} is negative")]
    NegativeTemperature(f64),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("answer trace has no positions")]
    Empty,
    #[error("trace has {positions} distributions but {chosen} chosen tokens")]
    LengthMismatch { positions: usize, chosen: usize },
    #[error("chosen token {token:?} at position {position} is marked in-top-k but absent from the candidates")]
    ChosenNotInCandidates { position: usize, token: String },
    #[error("position {position}: {source}")]
    Position {
        position: usize,
        source: DistributionError,
    },
}

/// One candidate token with its natural-log probability.
///
/// `log_prob` may be `-inf` (probability zero, e.g. after collapsing to a
/// one-hot) but never positive or NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenCandidate {
    pub token_text: String,
    pub log_prob: f64,
}

impl TokenCandidate {
    pub fn new(token_text: impl Into<String>, log_prob: f64) -> Result<Self, DistributionError> {
        let token_text = token_text.into();
        if log_prob.is_nan() || log_prob > 0.0 {
            return Err(DistributionError::InvalidLogProb(log_prob, token_text));
        }
        Ok(Self {
            token_text,
            log_prob,
        })
    }

    pub fn probability(&self) -> f64 {
        self.log_prob.exp()
    }
}

/// Top-k token distribution at one generation position.
///
/// Candidates are kept sorted by descending probability, ties broken by
/// ascending byte order of the token text, so index 0 is always the
/// deterministic argmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    candidates: Vec<TokenCandidate>,
    renormalized: bool,
}

impl TokenDistribution {
    /// Build a distribution from candidates, sorting them into canonical
    /// order. The `renormalized` flag is set when the probabilities already
    /// sum to 1 within [`NORMALIZATION_TOLERANCE`].
    pub fn new(mut candidates: Vec<TokenCandidate>) -> Result<Self, DistributionError> {
        if candidates.is_empty() {
            return Err(DistributionError::Empty);
        }
        if candidates.len() > MAX_CANDIDATES {
            return Err(DistributionError::TooManyCandidates(candidates.len()));
        }
        if !candidates.iter().any(|c| c.log_prob.is_finite()) {
            return Err(DistributionError::NoFiniteMass);
        }
        candidates.sort_by(|a, b| {
            b.log_prob
                .partial_cmp(&a.log_prob)
                .expect("log probs are never NaN")
                .then_with(|| a.token_text.as_bytes().cmp(b.token_text.as_bytes()))
        });
        let sum = kahan_sum(candidates.iter().map(TokenCandidate::probability));
        let renormalized = (sum - 1.0).abs() <= NORMALIZATION_TOLERANCE;
        Ok(Self {
            candidates,
            renormalized,
        })
    }

    /// Convenience constructor from plain probabilities.
    pub fn from_probabilities<S: Into<String>>(
        pairs: impl IntoIterator<Item = (S, f64)>,
    ) -> Result<Self, DistributionError> {
        let candidates = pairs
            .into_iter()
            .map(|(text, p)| {
                let text = text.into();
                if p.is_nan() || !(0.0..=1.0).contains(&p) {
                    return Err(DistributionError::InvalidLogProb(p.ln(), text));
                }
                TokenCandidate::new(text, p.ln())
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(candidates)
    }

    /// Uniform distribution over `n` synthetic tokens, already normalized.
    pub fn uniform(n: usize) -> Result<Self, DistributionError> {
        let lp = -(n as f64).ln();
        Self::new(
            (0..n)
                .map(|i| TokenCandidate {
                    token_text: format!("u{i}"),
                    log_prob: lp,
                })
                .collect(),
        )
    }

    pub fn candidates(&self) -> &[TokenCandidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn is_renormalized(&self) -> bool {
        self.renormalized
    }

    /// Highest-probability candidate (deterministic tie-break by byte order).
    pub fn argmax(&self) -> &TokenCandidate {
        &self.candidates[0]
    }

    /// Probability of `token_text`, if present among the candidates.
    pub fn probability_of(&self, token_text: &str) -> Option<f64> {
        self.candidates
            .iter()
            .find(|c| c.token_text == token_text)
            .map(TokenCandidate::probability)
    }

    pub fn probabilities(&self) -> impl Iterator<Item = f64> + '_ {
        self.candidates.iter().map(TokenCandidate::probability)
    }
}

/// Sampling temperature with the epsilon guard used at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Temperature {
    value: f64,
    epsilon: f64,
}

impl Temperature {
    pub const DEFAULT_EPSILON: f64 = 1e-4;

    pub fn new(value: f64) -> Result<Self, DistributionError> {
        if value.is_nan() || value < 0.0 {
            return Err(DistributionError::NegativeTemperature(value));
        }
        Ok(Self {
            value,
            epsilon: Self::DEFAULT_EPSILON,
        })
    }

    pub fn zero() -> Self {
        Self {
            value: 0.0,
            epsilon: Self::DEFAULT_EPSILON,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0.0
    }
}

/// A token actually emitted at one position, with the log-probability it had
/// in the distribution it was drawn from. `in_top_k` is false when a live
/// endpoint sampled a token outside the reported top-k list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenToken {
    pub text: String,
    pub log_prob: f64,
    pub in_top_k: bool,
}

/// A generated answer: per-position candidate distributions, the tokens that
/// were actually chosen, and the decoded text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerTrace {
    pub positions: Vec<TokenDistribution>,
    pub chosen: Vec<ChosenToken>,
    pub decoded_text: String,
    /// Set by trace replay when sampling left the recorded path.
    #[serde(default)]
    pub diverged: bool,
}

impl AnswerTrace {
    pub fn new(
        positions: Vec<TokenDistribution>,
        chosen: Vec<ChosenToken>,
        decoded_text: String,
    ) -> Result<Self, TraceError> {
        if positions.len() != chosen.len() {
            return Err(TraceError::LengthMismatch {
                positions: positions.len(),
                chosen: chosen.len(),
            });
        }
        for (i, (dist, tok)) in positions.iter().zip(&chosen).enumerate() {
            if tok.in_top_k && dist.probability_of(&tok.text).is_none() {
                return Err(TraceError::ChosenNotInCandidates {
                    position: i,
                    token: tok.text.clone(),
                });
            }
        }
        Ok(Self {
            positions,
            chosen,
            decoded_text,
            diverged: false,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Rescale so probabilities sum to 1 while preserving candidate ratios.
pub fn renormalize(dist: &TokenDistribution) -> Result<TokenDistribution, DistributionError> {
    // log-sum-exp against the max keeps very negative tails from underflowing
    let max_lp = dist
        .candidates
        .iter()
        .map(|c| c.log_prob)
        .fold(f64::NEG_INFINITY, f64::max);
    let log_z = max_lp + kahan_sum(dist.candidates.iter().map(|c| (c.log_prob - max_lp).exp())).ln();
    let candidates = dist
        .candidates
        .iter()
        .map(|c| TokenCandidate {
            token_text: c.token_text.clone(),
            log_prob: (c.log_prob - log_z).min(0.0),
        })
        .collect();
    Ok(TokenDistribution {
        candidates,
        renormalized: true,
    })
}

/// Temperature-scale a renormalized distribution: each probability is raised
/// to `1/t` and the result renormalized. `t = 0` collapses to a one-hot on
/// the argmax directly, which is the exact limit of the epsilon form without
/// risking exponent overflow.
pub fn scale(
    dist: &TokenDistribution,
    t: Temperature,
) -> Result<TokenDistribution, DistributionError> {
    if !dist.renormalized {
        return Err(DistributionError::NotRenormalized("scale"));
    }
    if t.is_zero() {
        let candidates = dist
            .candidates
            .iter()
            .enumerate()
            .map(|(i, c)| TokenCandidate {
                token_text: c.token_text.clone(),
                log_prob: if i == 0 { 0.0 } else { f64::NEG_INFINITY },
            })
            .collect();
        return Ok(TokenDistribution {
            candidates,
            renormalized: true,
        });
    }
    let max_lp = dist.candidates[0].log_prob;
    let scaled = TokenDistribution {
        candidates: dist
            .candidates
            .iter()
            .map(|c| TokenCandidate {
                token_text: c.token_text.clone(),
                log_prob: (c.log_prob - max_lp) / t.value(),
            })
            .collect(),
        renormalized: false,
    };
    renormalize(&scaled)
}

/// Draw one token from `scale(dist, t)` by inverse CDF over the canonical
/// candidate order. Identical seeds yield identical tokens.
pub fn sample(
    dist: &TokenDistribution,
    t: Temperature,
    rng_seed: u64,
) -> Result<String, DistributionError> {
    let scaled = scale(dist, t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(sample_scaled(&scaled, &mut rng))
}

/// Inverse-CDF draw from an already-scaled distribution, reusing an RNG.
pub(crate) fn sample_scaled(scaled: &TokenDistribution, rng: &mut ChaCha8Rng) -> String {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    for c in &scaled.candidates {
        cumulative += c.probability();
        if u < cumulative {
            return c.token_text.clone();
        }
    }
    // float slack: the cumulative sum can land a hair under 1.0
    scaled
        .candidates
        .last()
        .expect("distributions are never empty")
        .token_text
        .clone()
}

/// Base-10 Shannon entropy of a renormalized distribution, in `[0, 1]` for
/// up to 10 candidates. Zero-probability candidates contribute nothing.
///
/// Probabilities are re-derived by max-shifted exponentiation so that exact
/// shapes stay exact: a uniform distribution yields p = 1/n without float
/// round-trip error, keeping the uniform-10 entropy at exactly 1.0 and the
/// one-hot entropy at exactly 0.0.
pub fn entropy(dist: &TokenDistribution) -> Result<f64, DistributionError> {
    if !dist.renormalized {
        return Err(DistributionError::NotRenormalized("entropy"));
    }
    if dist.len() > MAX_CANDIDATES {
        return Err(DistributionError::TooManyCandidates(dist.len()));
    }
    let max_lp = dist.candidates[0].log_prob;
    let weights: Vec<f64> = dist
        .candidates
        .iter()
        .map(|c| (c.log_prob - max_lp).exp())
        .collect();
    let z = kahan_sum(weights.iter().copied());
    let h = kahan_sum(weights.iter().map(|w| {
        let p = w / z;
        if p > 0.0 {
            -p * p.log10()
        } else {
            0.0
        }
    }));
    Ok(h.clamp(0.0, 1.0))
}

/// Mean per-position entropy of an answer trace.
pub fn trace_entropy(trace: &AnswerTrace) -> Result<f64, TraceError> {
    if trace.is_empty() {
        return Err(TraceError::Empty);
    }
    let mut total = 0.0;
    for (i, dist) in trace.positions.iter().enumerate() {
        total += entropy(dist).map_err(|source| TraceError::Position {
            position: i,
            source,
        })?;
    }
    Ok(total / trace.len() as f64)
}

/// Mean probability of the chosen token across positions; the certainty
/// statistic behind the per-temperature histogram bins.
pub fn trace_avg_probability(trace: &AnswerTrace) -> Result<f64, TraceError> {
    if trace.is_empty() {
        return Err(TraceError::Empty);
    }
    let total: f64 = trace.chosen.iter().map(|c| c.log_prob.exp()).sum();
    Ok(total / trace.len() as f64)
}

/// Compensated summation; keeps the uniform-10 entropy at exactly 1.0.
pub(crate) fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}
