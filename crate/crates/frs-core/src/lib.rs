//! Factual robustness evaluation for language models.
//!
//! The toolkit measures how stably a model retains facts by combining two
//! signals per question: the base-10 entropy of the token distributions
//! behind a correct answer, and the breaking temperature — the first
//! sampling temperature at which the answer's trial accuracy falls below a
//! threshold. The two combine into the Factual Robustness Score (FRS), a
//! scalar in `[0, 1]` with 1 reserved for answers that never break on the
//! evaluated temperature grid.
//!
//! Modules follow the pipeline: [`datasets`] ingests closed-book QA records,
//! [`models`] generates answer traces (live API, trace replay, or synthetic
//! oracle), [`dist`] handles distributions and entropy, [`protocol`] selects
//! baselines and finds breaking temperatures, [`score`] computes the FRS,
//! [`analysis`] aggregates results into reports, and [`runstate`] persists
//! progress so long runs resume.

pub mod analysis;
pub mod config;
pub mod datasets;
pub mod dist;
pub mod models;
pub mod protocol;
pub mod runstate;
pub mod score;
pub mod validation;

pub use analysis::{
    aggregate_frs, audit_report, emit_report, entropy_vs_break_correlation, pearson,
    AnalysisError, BreakCorrelation, RunMetadata, RunReport,
};
pub use config::{BackendSpec, ConfigError, RunConfig, API_KEY_ENV};
pub use datasets::{
    build_prompt, load_dataset, load_type_labels, DatasetError, DatasetTag, Exemplar,
    PromptTemplate, QaRecord, QuestionType,
};
pub use dist::{
    entropy, renormalize, sample, scale, trace_avg_probability, trace_entropy, AnswerTrace,
    ChosenToken, DistributionError, Temperature, TokenCandidate, TokenDistribution, TraceError,
};
pub use models::{
    synth_break_oracle, GenerationRequest, ModelClient, ModelError, OpenAiCompatModel,
    ReplayModel, SyntheticModel, SyntheticSpec, TraceStore,
};
pub use protocol::{
    accuracy_at_temperature, contains_match, derive_trial_seed, exact_match,
    find_breaking_binary, find_breaking_linear, normalize_answer, select_baseline, sweep,
    AccuracyCurve, AccuracyPoint, ProtocolError, SelectedSample, SelectionOutcome, SweepConfig,
    SweepMode, SweepOutput,
};
pub use runstate::{RunStateError, RunStore, SampleOutcome};
pub use score::{frs_for_sample, frs_raw, frs_scaled, BreakResult, RobustnessSample, ScoreError};
