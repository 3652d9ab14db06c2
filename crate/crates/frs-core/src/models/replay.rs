//! Offline trace replay: resample recorded `t = 1` token distributions under
//! local temperature scaling, following the recorded greedy path.
//!
//! Replay approximates regeneration. When a sampled token leaves the recorded
//! path there is no model to continue from, so generation stops and the trace
//! is marked diverged; for short answers a diverged token almost always
//! breaks containment, making the approximation pessimistic.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{renormalize, sample_scaled, scale, AnswerTrace, ChosenToken, TokenCandidate, TokenDistribution};
use crate::models::{GenerationRequest, ModelClient, ModelError};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cannot read trace store {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("trace store line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("trace store has no records")]
    Empty,
}

/// Wire format of one stored trace: the recorded top-k log-probabilities at
/// every position of the greedy answer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredTrace {
    pub question_id: String,
    pub gold: String,
    /// `positions[i]` is the top-k list at position `i`: `{token, logprob}`.
    pub positions: Vec<Vec<StoredCandidate>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredCandidate {
    pub token: String,
    pub logprob: f64,
}

/// A loaded trace: renormalized distributions plus the greedy path.
#[derive(Debug, Clone)]
pub struct RecordedTrace {
    pub gold: String,
    pub positions: Vec<TokenDistribution>,
    pub greedy_path: Vec<String>,
}

/// Read-only map from question id to its recorded trace.
#[derive(Debug, Default)]
pub struct TraceStore {
    traces: HashMap<String, RecordedTrace>,
}

impl TraceStore {
    /// Load a line-delimited store; every line is one [`StoredTrace`].
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let file = std::fs::File::open(path).map_err(|source| StoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let reader = std::io::BufReader::new(file);
        let mut store = TraceStore::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| StoreError::Io {
                path: path.display().to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let stored: StoredTrace =
                serde_json::from_str(&line).map_err(|e| StoreError::Malformed {
                    line: i + 1,
                    detail: e.to_string(),
                })?;
            store.insert(stored, i + 1)?;
        }
        if store.traces.is_empty() {
            return Err(StoreError::Empty);
        }
        Ok(store)
    }

    /// Build a store in memory, mainly for tests and fixtures.
    pub fn from_records(records: Vec<StoredTrace>) -> Result<Self, StoreError> {
        let mut store = TraceStore::default();
        for (i, stored) in records.into_iter().enumerate() {
            store.insert(stored, i + 1)?;
        }
        Ok(store)
    }

    fn insert(&mut self, stored: StoredTrace, line: usize) -> Result<(), StoreError> {
        if stored.positions.is_empty() {
            return Err(StoreError::Malformed {
                line,
                detail: format!("question {:?} has no positions", stored.question_id),
            });
        }
        let mut positions = Vec::with_capacity(stored.positions.len());
        let mut greedy_path = Vec::with_capacity(stored.positions.len());
        for (pos, cands) in stored.positions.iter().enumerate() {
            let candidates = cands
                .iter()
                .map(|c| TokenCandidate::new(c.token.clone(), c.logprob.min(0.0)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| StoreError::Malformed {
                    line,
                    detail: format!("position {pos}: {e}"),
                })?;
            let dist = TokenDistribution::new(candidates).map_err(|e| StoreError::Malformed {
                line,
                detail: format!("position {pos}: {e}"),
            })?;
            // recorded top-k lists are truncated; store them renormalized
            let dist = renormalize(&dist).map_err(|e| StoreError::Malformed {
                line,
                detail: format!("position {pos}: {e}"),
            })?;
            greedy_path.push(dist.argmax().token_text.clone());
            positions.push(dist);
        }
        self.traces.insert(
            stored.question_id,
            RecordedTrace {
                gold: stored.gold,
                positions,
                greedy_path,
            },
        );
        Ok(())
    }

    pub fn get(&self, question_id: &str) -> Option<&RecordedTrace> {
        self.traces.get(question_id)
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Question ids in sorted order.
    pub fn question_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.traces.keys().map(String::as_str).collect();
        ids.sort_unstable();
        ids
    }
}

/// Backend that replays a [`TraceStore`].
pub struct ReplayModel {
    store: Arc<TraceStore>,
}

impl ReplayModel {
    pub fn new(store: Arc<TraceStore>) -> Self {
        Self { store }
    }

    pub fn store(&self) -> &TraceStore {
        &self.store
    }
}

impl ModelClient for ReplayModel {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<AnswerTrace, ModelError> {
        let recorded = self
            .store
            .get(request.question_id)
            .ok_or_else(|| ModelError::UnknownQuestion(request.question_id.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
        let length = recorded.positions.len().min(request.max_new_tokens);
        let mut positions = Vec::with_capacity(length);
        let mut chosen = Vec::with_capacity(length);
        let mut decoded = String::new();
        let mut diverged = false;
        for i in 0..length {
            let dist = &recorded.positions[i];
            let scaled = scale(dist, request.temperature)?;
            let text = sample_scaled(&scaled, &mut rng);
            let log_prob = scaled
                .probability_of(&text)
                .expect("sampled token is a candidate")
                .ln();
            decoded.push_str(&text);
            positions.push(dist.clone());
            let on_path = text == recorded.greedy_path[i];
            chosen.push(ChosenToken {
                text,
                log_prob,
                in_top_k: true,
            });
            if !on_path {
                diverged = true;
                break;
            }
        }
        let mut trace = AnswerTrace::new(positions, chosen, decoded)?;
        trace.diverged = diverged;
        Ok(trace)
    }

    fn reports_top_logprobs(&self) -> bool {
        true
    }

    fn deterministic_at_t0(&self) -> bool {
        true
    }

    fn id(&self) -> String {
        format!("replay({} traces)", self.store.len())
    }
}
