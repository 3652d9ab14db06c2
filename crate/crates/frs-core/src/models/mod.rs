//! Model backends behind one generation contract: a live OpenAI-compatible
//! chat-completions client, a trace-replay model for offline determinism,
//! and an analytic synthetic model used as a test oracle.

use thiserror::Error;

use crate::dist::{AnswerTrace, DistributionError, Temperature, TraceError};

pub mod api;
pub mod replay;
pub mod synthetic;

pub use api::{ChatTransport, HttpResponse, OpenAiCompatModel, ReqwestTransport, RetryPolicy, TransportError};
pub use replay::{ReplayModel, TraceStore};
pub use synthetic::{synth_break_oracle, OracleError, SyntheticModel, SyntheticSpec};

/// Candidate lists are fixed at the top 10 tokens even when an endpoint
/// offers more, keeping the entropy bound at 1.
pub const TOP_K: usize = 10;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("transport failed after {attempts} attempts: {source}")]
    Transport {
        attempts: usize,
        #[source]
        source: TransportError,
    },
    #[error("endpoint returned HTTP {status}: {detail}")]
    Http { status: u16, detail: String },
    #[error("endpoint {endpoint} did not report token log-probabilities ({detail})")]
    Capability { endpoint: String, detail: String },
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("question {0:?} is not in the trace store")]
    UnknownQuestion(String),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// One generation request. `question_id` lets offline backends look up
/// recorded state; live backends use only the prompt.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub question_id: &'a str,
    pub prompt: &'a str,
    pub temperature: Temperature,
    pub max_new_tokens: usize,
    pub top_k: usize,
    pub seed: u64,
}

/// The generation contract all backends implement.
pub trait ModelClient: Send + Sync {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<AnswerTrace, ModelError>;

    /// Whether traces carry per-position top-k log-probabilities.
    fn reports_top_logprobs(&self) -> bool;

    /// Whether `t = 0` generation is guaranteed bit-reproducible.
    fn deterministic_at_t0(&self) -> bool;

    /// Identifier for report metadata.
    fn id(&self) -> String;
}

/// Check the shape guarantees every backend must honor: position count and
/// candidate counts within bounds, all distributions renormalized, and the
/// trace internally consistent.
pub fn verify_trace_contract(
    trace: &AnswerTrace,
    max_new_tokens: usize,
    top_k: usize,
) -> Result<(), String> {
    if trace.positions.len() > max_new_tokens {
        return Err(format!(
            "trace has {} positions, over the limit of {max_new_tokens}",
            trace.positions.len()
        ));
    }
    if trace.positions.len() != trace.chosen.len() {
        return Err(format!(
            "{} positions but {} chosen tokens",
            trace.positions.len(),
            trace.chosen.len()
        ));
    }
    for (i, dist) in trace.positions.iter().enumerate() {
        if dist.len() > top_k {
            return Err(format!(
                "position {i} has {} candidates, over the top-k of {top_k}",
                dist.len()
            ));
        }
        if !dist.is_renormalized() {
            return Err(format!("position {i} is not renormalized"));
        }
    }
    for (i, chosen) in trace.chosen.iter().enumerate() {
        if chosen.in_top_k && trace.positions[i].probability_of(&chosen.text).is_none() {
            return Err(format!(
                "chosen token {:?} at position {i} marked in-top-k but missing from candidates",
                chosen.text
            ));
        }
    }
    Ok(())
}
