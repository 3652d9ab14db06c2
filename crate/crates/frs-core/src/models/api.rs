//! Live backend speaking the OpenAI-compatible chat-completions protocol
//! with per-token top log-probabilities.
//!
//! The HTTP layer sits behind [`ChatTransport`] so the request/response
//! handling, retry policy, and trace parsing are all testable against
//! recorded fixtures without a network.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{renormalize, AnswerTrace, ChosenToken, TokenCandidate, TokenDistribution};
use crate::models::{GenerationRequest, ModelClient, ModelError};

/// Connection-level failure; always worth retrying.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct TransportError(pub String);

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal POST-a-JSON-body transport.
pub trait ChatTransport: Send + Sync {
    fn post_chat(&self, url: &str, api_key: &str, body: &str)
        -> Result<HttpResponse, TransportError>;
}

/// Blocking reqwest-based transport.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(Self { client })
    }
}

impl ChatTransport for ReqwestTransport {
    fn post_chat(
        &self,
        url: &str,
        api_key: &str,
        body: &str,
    ) -> Result<HttpResponse, TransportError> {
        let response = self
            .client
            .post(url)
            .header("Authorization", format!("Bearer {api_key}"))
            .header("Content-Type", "application/json")
            .body(body.to_string())
            .send()
            .map_err(|e| TransportError(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff: Duration::from_millis(250),
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: usize,
    logprobs: bool,
    top_logprobs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
    logprobs: Option<ResponseLogProbs>,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ResponseLogProbs {
    content: Option<Vec<TokenLogProb>>,
}

#[derive(Deserialize)]
struct TokenLogProb {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<TopLogProb>,
}

#[derive(Deserialize)]
struct TopLogProb {
    token: String,
    logprob: f64,
}

/// Chat-completions client for any OpenAI-compatible endpoint.
pub struct OpenAiCompatModel {
    endpoint: String,
    model: String,
    api_key: String,
    transport: Arc<dyn ChatTransport>,
    retry: RetryPolicy,
    /// Whether to pass the sampling seed through to the endpoint. Endpoints
    /// that reject unknown fields can turn this off.
    send_seed: bool,
}

impl OpenAiCompatModel {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: impl Into<String>,
        transport: Arc<dyn ChatTransport>,
    ) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: api_key.into(),
            transport,
            retry: RetryPolicy::default(),
            send_seed: true,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_send_seed(mut self, send_seed: bool) -> Self {
        self.send_seed = send_seed;
        self
    }

    fn execute_with_retry(&self, body: &str) -> Result<HttpResponse, ModelError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.transport.post_chat(&self.endpoint, &self.api_key, body) {
                Ok(response) if retriable_status(response.status) => {
                    if attempt >= self.retry.max_attempts {
                        return Err(ModelError::Http {
                            status: response.status,
                            detail: truncate(&response.body, 400),
                        });
                    }
                }
                Ok(response) if !(200..300).contains(&response.status) => {
                    return Err(ModelError::Http {
                        status: response.status,
                        detail: truncate(&response.body, 400),
                    });
                }
                Ok(response) => return Ok(response),
                Err(source) => {
                    if attempt >= self.retry.max_attempts {
                        return Err(ModelError::Transport {
                            attempts: attempt,
                            source,
                        });
                    }
                }
            }
            std::thread::sleep(self.retry.backoff * attempt as u32);
        }
    }
}

fn retriable_status(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

fn truncate(s: &str, limit: usize) -> String {
    if s.len() <= limit {
        s.to_string()
    } else {
        let mut end = limit;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &s[..end])
    }
}

/// Parse a chat-completions response body into a contract-valid trace.
pub fn parse_completion_trace(
    body: &str,
    top_k: usize,
    endpoint: &str,
) -> Result<AnswerTrace, ModelError> {
    let response: ChatResponse =
        serde_json::from_str(body).map_err(|e| ModelError::MalformedResponse(e.to_string()))?;
    let choice = response
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| ModelError::MalformedResponse("response has no choices".into()))?;
    let decoded_text = choice.message.content.unwrap_or_default();
    let token_logprobs = choice
        .logprobs
        .and_then(|lp| lp.content)
        .ok_or_else(|| ModelError::Capability {
            endpoint: endpoint.to_string(),
            detail: "choices[0].logprobs.content missing".into(),
        })?;

    let mut positions = Vec::with_capacity(token_logprobs.len());
    let mut chosen = Vec::with_capacity(token_logprobs.len());
    for (i, entry) in token_logprobs.iter().enumerate() {
        if entry.top_logprobs.is_empty() {
            return Err(ModelError::Capability {
                endpoint: endpoint.to_string(),
                detail: format!("top_logprobs missing at position {i}"),
            });
        }
        let candidates = entry
            .top_logprobs
            .iter()
            .take(top_k)
            .map(|t| TokenCandidate::new(t.token.clone(), t.logprob.min(0.0)))
            .collect::<Result<Vec<_>, _>>()?;
        let dist = renormalize(&TokenDistribution::new(candidates)?)?;
        let in_top_k = dist.probability_of(&entry.token).is_some();
        chosen.push(ChosenToken {
            text: entry.token.clone(),
            log_prob: entry.logprob.min(0.0),
            in_top_k,
        });
        positions.push(dist);
    }
    Ok(AnswerTrace::new(positions, chosen, decoded_text)?)
}

impl ModelClient for OpenAiCompatModel {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<AnswerTrace, ModelError> {
        let body = serde_json::to_string(&ChatRequest {
            model: &self.model,
            messages: vec![ChatMessage {
                role: "user",
                content: request.prompt,
            }],
            temperature: request.temperature.value(),
            max_tokens: request.max_new_tokens,
            logprobs: true,
            top_logprobs: request.top_k,
            seed: self.send_seed.then_some(request.seed),
        })
        .expect("chat request serializes");
        let response = self.execute_with_retry(&body)?;
        parse_completion_trace(&response.body, request.top_k, &self.endpoint)
    }

    fn reports_top_logprobs(&self) -> bool {
        true
    }

    fn deterministic_at_t0(&self) -> bool {
        // even with a seed, hosted endpoints only promise best-effort
        // determinism, so reruns may differ
        false
    }

    fn id(&self) -> String {
        format!("{}@{}", self.model, self.endpoint)
    }
}
