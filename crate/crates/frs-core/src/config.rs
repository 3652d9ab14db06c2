//! Run configuration: backend choice, dataset source, sweep settings, and
//! the canonical config hash stamped into every artifact a run writes.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::datasets::{DatasetTag, Exemplar, PromptTemplate};
use crate::models::api::{OpenAiCompatModel, ReqwestTransport, RetryPolicy};
use crate::models::replay::{ReplayModel, TraceStore};
use crate::models::synthetic::{SyntheticModel, SyntheticSpec};
use crate::models::ModelClient;
use crate::protocol::SweepConfig;

/// Environment variable holding the API credential; never stored in configs.
pub const API_KEY_ENV: &str = "FRS_API_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("backend requires the {API_KEY_ENV} environment variable")]
    MissingCredential,
    #[error("cannot load trace store: {0}")]
    TraceStore(#[from] crate::models::replay::StoreError),
    #[error("invalid synthetic spec: {0}")]
    Synthetic(#[from] crate::models::synthetic::OracleError),
    #[error("cannot build HTTP transport: {0}")]
    Transport(#[from] crate::models::api::TransportError),
    #[error(transparent)]
    Dataset(#[from] crate::datasets::DatasetError),
}

/// Which model backend a run drives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BackendSpec {
    /// OpenAI-compatible chat-completions endpoint. The credential comes
    /// from [`API_KEY_ENV`].
    Api {
        endpoint: String,
        model: String,
        #[serde(default = "default_true")]
        send_seed: bool,
        #[serde(default = "default_attempts")]
        max_attempts: usize,
        #[serde(default = "default_backoff_ms")]
        backoff_ms: u64,
        #[serde(default = "default_timeout_s")]
        timeout_s: u64,
    },
    /// Offline replay of recorded traces.
    Replay { trace_store: PathBuf },
    /// Analytic synthetic model.
    Synthetic {
        correct_token_prob: f64,
        #[serde(default = "default_candidates")]
        candidate_count: usize,
        #[serde(default = "default_answer_length")]
        answer_length: usize,
    },
}

fn default_true() -> bool {
    true
}
fn default_attempts() -> usize {
    3
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_timeout_s() -> u64 {
    60
}
fn default_candidates() -> usize {
    10
}
fn default_answer_length() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSource {
    pub path: PathBuf,
    pub format: DatasetTag,
}

/// Sweep settings as they appear in config files; `grid` of `None` means the
/// default 0.2..2.0 grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    pub grid: Option<Vec<f64>>,
    pub trials_per_temperature: usize,
    pub break_threshold: f64,
    pub run_seed: u64,
    pub max_new_tokens: usize,
    pub concurrency_limit: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        let base = SweepConfig::default();
        Self {
            grid: None,
            trials_per_temperature: base.trials_per_temperature,
            break_threshold: base.break_threshold,
            run_seed: base.run_seed,
            max_new_tokens: base.max_new_tokens,
            concurrency_limit: base.concurrency_limit,
        }
    }
}

impl SweepSettings {
    pub fn to_sweep_config(&self) -> SweepConfig {
        SweepConfig {
            grid: self.grid.clone().unwrap_or_else(SweepConfig::default_grid),
            trials_per_temperature: self.trials_per_temperature,
            break_threshold: self.break_threshold,
            run_seed: self.run_seed,
            max_new_tokens: self.max_new_tokens,
            concurrency_limit: self.concurrency_limit,
        }
    }
}

/// Prompt wording for a run. Exemplars live here, not in code: the built-in
/// default is zero-shot and explicitly non-canonical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PromptSettings {
    pub preamble: Option<String>,
    pub exemplars: Vec<Exemplar>,
}

impl PromptSettings {
    pub fn to_template(&self) -> Result<PromptTemplate, ConfigError> {
        let preamble = self
            .preamble
            .clone()
            .unwrap_or_else(|| PromptTemplate::DEFAULT_PREAMBLE.to_string());
        Ok(PromptTemplate::new(preamble, self.exemplars.clone())?)
    }
}

/// A full run configuration, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub backend: BackendSpec,
    #[serde(default)]
    pub dataset: Option<DatasetSource>,
    #[serde(default)]
    pub sweep: SweepSettings,
    #[serde(default = "default_d_values")]
    pub d_values: Vec<f64>,
    #[serde(default = "default_target_count")]
    pub target_count: usize,
    #[serde(default)]
    pub prompt: PromptSettings,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub labels_path: Option<PathBuf>,
}

fn default_d_values() -> Vec<f64> {
    vec![1.0, 2.0, 5.0, 10.0, 50.0]
}

fn default_target_count() -> usize {
    1000
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sweep
            .to_sweep_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.d_values.is_empty() {
            return Err(ConfigError::Invalid("d_values must not be empty".into()));
        }
        if self.d_values.iter().any(|&d| d.is_nan() || d < 1.0) {
            return Err(ConfigError::Invalid(
                "every d value must be at least 1".into(),
            ));
        }
        if self.target_count == 0 {
            return Err(ConfigError::Invalid("target_count must be positive".into()));
        }
        match &self.backend {
            BackendSpec::Synthetic {
                correct_token_prob,
                candidate_count,
                answer_length,
            } => {
                SyntheticSpec::new(*correct_token_prob, *candidate_count, *answer_length)?;
            }
            BackendSpec::Api { endpoint, model, .. } => {
                if endpoint.is_empty() || model.is_empty() {
                    return Err(ConfigError::Invalid(
                        "api backend needs endpoint and model".into(),
                    ));
                }
                if self.dataset.is_none() {
                    return Err(ConfigError::Invalid(
                        "api backend needs a dataset".into(),
                    ));
                }
            }
            BackendSpec::Replay { .. } => {
                if self.dataset.is_none() {
                    return Err(ConfigError::Invalid(
                        "replay backend needs a dataset".into(),
                    ));
                }
            }
        }
        self.prompt.to_template()?;
        Ok(())
    }

    /// Hash of the canonicalized config bytes (the parsed structure
    /// re-serialized to JSON), stamped into every artifact of the run.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        let mut hex = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    pub fn sweep_config(&self) -> SweepConfig {
        self.sweep.to_sweep_config()
    }

    pub fn template(&self) -> Result<PromptTemplate, ConfigError> {
        self.prompt.to_template()
    }

    /// Instantiate the configured backend.
    pub fn build_model(&self) -> Result<Arc<dyn ModelClient>, ConfigError> {
        match &self.backend {
            BackendSpec::Synthetic {
                correct_token_prob,
                candidate_count,
                answer_length,
            } => {
                let spec =
                    SyntheticSpec::new(*correct_token_prob, *candidate_count, *answer_length)?;
                Ok(Arc::new(SyntheticModel::new(spec)))
            }
            BackendSpec::Replay { trace_store } => {
                let store = TraceStore::load(trace_store)?;
                Ok(Arc::new(ReplayModel::new(Arc::new(store))))
            }
            BackendSpec::Api {
                endpoint,
                model,
                send_seed,
                max_attempts,
                backoff_ms,
                timeout_s,
            } => {
                let api_key =
                    std::env::var(API_KEY_ENV).map_err(|_| ConfigError::MissingCredential)?;
                let transport = ReqwestTransport::new(Duration::from_secs(*timeout_s))?;
                Ok(Arc::new(
                    OpenAiCompatModel::new(endpoint, model, api_key, Arc::new(transport))
                        .with_send_seed(*send_seed)
                        .with_retry(RetryPolicy {
                            max_attempts: *max_attempts,
                            backoff: Duration::from_millis(*backoff_ms),
                        }),
                ))
            }
        }
    }

    /// The synthetic spec, when the backend is synthetic.
    pub fn synthetic_spec(&self) -> Option<SyntheticSpec> {
        match &self.backend {
            BackendSpec::Synthetic {
                correct_token_prob,
                candidate_count,
                answer_length,
            } => SyntheticSpec::new(*correct_token_prob, *candidate_count, *answer_length).ok(),
            _ => None,
        }
    }

    /// Human-readable backend identifier for report metadata; mirrors the
    /// instantiated client's id without requiring credentials.
    pub fn model_label(&self) -> String {
        match &self.backend {
            BackendSpec::Api {
                endpoint, model, ..
            } => format!("{model}@{endpoint}"),
            BackendSpec::Replay { trace_store } => {
                format!("replay({})", trace_store.display())
            }
            BackendSpec::Synthetic {
                correct_token_prob,
                candidate_count,
                answer_length,
            } => format!(
                "synthetic(p={correct_token_prob}, k={candidate_count}, len={answer_length})"
            ),
        }
    }

    pub fn dataset_tag(&self) -> String {
        match &self.dataset {
            Some(source) => source.format.to_string(),
            None => match self.backend {
                BackendSpec::Synthetic { .. } => "synthetic".to_string(),
                _ => "unspecified".to_string(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_config_json() -> String {
        r#"{
            "backend": {"type": "synthetic", "correct_token_prob": 0.7},
            "output_dir": "/tmp/run",
            "sweep": {"trials_per_temperature": 100, "run_seed": 7},
            "d_values": [1, 5],
            "target_count": 20
        }"#
        .to_string()
    }

    #[test]
    fn synthetic_config_parses_with_defaults() {
        let config = RunConfig::from_json(&synthetic_config_json()).unwrap();
        assert_eq!(config.sweep.trials_per_temperature, 100);
        assert_eq!(config.sweep.break_threshold, 0.5);
        assert_eq!(config.sweep_config().grid.len(), 10);
        assert_eq!(config.d_values, vec![1.0, 5.0]);
        assert!(config.synthetic_spec().is_some());
        assert_eq!(config.dataset_tag(), "synthetic");
    }

    #[test]
    fn config_hash_is_stable_and_whitespace_insensitive() {
        let a = RunConfig::from_json(&synthetic_config_json()).unwrap();
        let spaced = synthetic_config_json().replace('\n', "\n  ");
        let b = RunConfig::from_json(&spaced).unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 16);

        let mut c = a.clone();
        c.target_count = 21;
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        // d below 1
        let bad = synthetic_config_json().replace("[1, 5]", "[0.5]");
        assert!(RunConfig::from_json(&bad).is_err());
        // unknown field
        let bad = synthetic_config_json().replace("\"target_count\": 20", "\"target\": 20");
        assert!(RunConfig::from_json(&bad).is_err());
        // api backend without dataset
        let bad = r#"{
            "backend": {"type": "api", "endpoint": "https://example.test/v1/chat/completions", "model": "m"},
            "output_dir": "/tmp/run"
        }"#;
        assert!(RunConfig::from_json(bad).is_err());
    }

    #[test]
    fn api_backend_requires_credential() {
        let json = r#"{
            "backend": {"type": "api", "endpoint": "https://example.test/v1/chat/completions", "model": "m"},
            "dataset": {"path": "/tmp/data.jsonl", "format": "custom"},
            "output_dir": "/tmp/run"
        }"#;
        let config = RunConfig::from_json(json).unwrap();
        std::env::remove_var(API_KEY_ENV);
        assert!(matches!(
            config.build_model(),
            Err(ConfigError::MissingCredential)
        ));
    }

    #[test]
    fn exemplars_come_from_config() {
        let json = r#"{
            "backend": {"type": "synthetic", "correct_token_prob": 0.9},
            "output_dir": "/tmp/run",
            "prompt": {
                "preamble": "Answer briefly.",
                "exemplars": [
                    {"question": "In what year did Universal make a film version of Dracula?", "answer": "1931"},
                    {"question": "The Scorpions came from what country?", "answer": "Germany"}
                ]
            }
        }"#;
        let config = RunConfig::from_json(json).unwrap();
        let template = config.template().unwrap();
        assert_eq!(template.exemplars().len(), 2);
    }
}
