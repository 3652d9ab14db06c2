//! Closed-book QA ingestion: importers for the common public dataset
//! layouts, a line-delimited custom interchange schema, few-shot prompt
//! construction, and question-type label files.
//!
//! Loading strips every passage or evidence field; records carry only the
//! question and its gold answers, so nothing downstream can leak context.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Format { path: String, detail: String },
    #[error("{path}: no parseable records")]
    NoRecords { path: String },
    #[error("label file line {line}: unknown question type {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("label file line {line}: {detail}")]
    MalformedLabel { line: usize, detail: String },
    #[error("exemplar answer {answer:?} is too long ({words} words, limit {limit})")]
    ExemplarTooLong {
        answer: String,
        words: usize,
        limit: usize,
    },
}

/// Which public dataset layout a file follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetTag {
    Squad,
    Triviaqa,
    Hotpotqa,
    Custom,
}

impl std::fmt::Display for DatasetTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            DatasetTag::Squad => "squad",
            DatasetTag::Triviaqa => "triviaqa",
            DatasetTag::Hotpotqa => "hotpotqa",
            DatasetTag::Custom => "custom",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for DatasetTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "squad" => Ok(DatasetTag::Squad),
            "triviaqa" => Ok(DatasetTag::Triviaqa),
            "hotpotqa" => Ok(DatasetTag::Hotpotqa),
            "custom" => Ok(DatasetTag::Custom),
            other => Err(format!("unknown dataset format {other:?}")),
        }
    }
}

/// The four question categories carried through to the robustness report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QuestionType {
    Numerical,
    Location,
    Entity,
    Human,
}

impl std::fmt::Display for QuestionType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            QuestionType::Numerical => "Numerical",
            QuestionType::Location => "Location",
            QuestionType::Entity => "Entity",
            QuestionType::Human => "Human",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for QuestionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Numerical" => Ok(QuestionType::Numerical),
            "Location" => Ok(QuestionType::Location),
            "Entity" => Ok(QuestionType::Entity),
            "Human" => Ok(QuestionType::Human),
            other => Err(format!("unknown question type {other:?}")),
        }
    }
}

/// One closed-book question: id, text, and gold aliases. Never carries
/// passage or context text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRecord {
    pub question_id: String,
    pub question: String,
    /// All accepted answers; matching anywhere in the pipeline accepts any
    /// alias.
    pub gold_answers: Vec<String>,
    pub dataset_tag: DatasetTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_type: Option<QuestionType>,
}

/// Records plus the count of malformed or duplicate entries skipped.
#[derive(Debug)]
pub struct LoadedDataset {
    pub records: Vec<QaRecord>,
    pub skipped: usize,
}

/// Load a dataset file in the given layout, yielding uniform records with
/// contexts stripped. Malformed entries are skipped and counted; a file with
/// zero usable records is an error.
pub fn load_dataset(path: &Path, format: DatasetTag) -> Result<LoadedDataset, DatasetError> {
    let display = path.display().to_string();
    let loaded = match format {
        DatasetTag::Custom => load_custom(path)?,
        DatasetTag::Squad => load_squad(path)?,
        DatasetTag::Triviaqa => load_triviaqa(path)?,
        DatasetTag::Hotpotqa => load_hotpotqa(path)?,
    };
    let mut seen = std::collections::HashSet::new();
    let mut records = Vec::with_capacity(loaded.records.len());
    let mut skipped = loaded.skipped;
    for record in loaded.records {
        if record.question_id.is_empty()
            || record.question.is_empty()
            || record.gold_answers.is_empty()
            || !seen.insert(record.question_id.clone())
        {
            skipped += 1;
            continue;
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(DatasetError::NoRecords { path: display });
    }
    Ok(LoadedDataset { records, skipped })
}

fn read_to_string(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Custom interchange schema: one JSON object per line with `question_id`,
/// `question`, `gold_answers`, and an optional `question_type`.
fn load_custom(path: &Path) -> Result<LoadedDataset, DatasetError> {
    #[derive(Deserialize)]
    struct CustomRecord {
        question_id: String,
        question: String,
        gold_answers: Vec<String>,
        #[serde(default)]
        question_type: Option<QuestionType>,
    }

    let text = read_to_string(path)?;
    let mut records = Vec::new();
    let mut skipped = 0;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CustomRecord>(line) {
            Ok(r) => records.push(QaRecord {
                question_id: r.question_id,
                question: r.question,
                gold_answers: r.gold_answers,
                dataset_tag: DatasetTag::Custom,
                question_type: r.question_type,
            }),
            Err(_) => skipped += 1,
        }
    }
    Ok(LoadedDataset { records, skipped })
}

/// Write records in the custom interchange schema (one JSON object per line).
pub fn write_custom_records(path: &Path, records: &[QaRecord]) -> Result<(), DatasetError> {
    #[derive(Serialize)]
    struct CustomRecord<'a> {
        question_id: &'a str,
        question: &'a str,
        gold_answers: &'a [String],
        #[serde(skip_serializing_if = "Option::is_none")]
        question_type: &'a Option<QuestionType>,
    }

    let mut out = String::new();
    for r in records {
        let line = serde_json::to_string(&CustomRecord {
            question_id: &r.question_id,
            question: &r.question,
            gold_answers: &r.gold_answers,
            question_type: &r.question_type,
        })
        .expect("record serializes");
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// SQuAD v1 layout: `data[].paragraphs[].qas[]` with `answers[].text`.
/// Contexts are dropped; distinct answer texts become aliases.
fn load_squad(path: &Path) -> Result<LoadedDataset, DatasetError> {
    #[derive(Deserialize)]
    struct File {
        data: Vec<Article>,
    }
    #[derive(Deserialize)]
    struct Article {
        paragraphs: Vec<Paragraph>,
    }
    #[derive(Deserialize)]
    struct Paragraph {
        qas: Vec<Qa>,
    }
    #[derive(Deserialize)]
    struct Qa {
        id: String,
        question: String,
        #[serde(default)]
        answers: Vec<Answer>,
    }
    #[derive(Deserialize)]
    struct Answer {
        text: String,
    }

    let text = read_to_string(path)?;
    let file: File = serde_json::from_str(&text).map_err(|e| DatasetError::Format {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let mut records = Vec::new();
    let mut skipped = 0;
    for article in file.data {
        for paragraph in article.paragraphs {
            for qa in paragraph.qas {
                let mut golds: Vec<String> = Vec::new();
                for answer in qa.answers {
                    if !answer.text.is_empty() && !golds.contains(&answer.text) {
                        golds.push(answer.text);
                    }
                }
                if golds.is_empty() {
                    skipped += 1;
                    continue;
                }
                records.push(QaRecord {
                    question_id: qa.id,
                    question: qa.question,
                    gold_answers: golds,
                    dataset_tag: DatasetTag::Squad,
                    question_type: None,
                });
            }
        }
    }
    Ok(LoadedDataset { records, skipped })
}

/// TriviaQA layout: `Data[]` with `QuestionId`, `Question`, and
/// `Answer.Value` plus `Answer.Aliases`; all aliases are preserved.
fn load_triviaqa(path: &Path) -> Result<LoadedDataset, DatasetError> {
    #[derive(Deserialize)]
    struct File {
        #[serde(rename = "Data")]
        data: Vec<Entry>,
    }
    #[derive(Deserialize)]
    struct Entry {
        #[serde(rename = "QuestionId")]
        question_id: String,
        #[serde(rename = "Question")]
        question: String,
        #[serde(rename = "Answer")]
        answer: Option<Answer>,
    }
    #[derive(Deserialize)]
    struct Answer {
        #[serde(rename = "Value")]
        value: Option<String>,
        #[serde(default, rename = "Aliases")]
        aliases: Vec<String>,
    }

    let text = read_to_string(path)?;
    let file: File = serde_json::from_str(&text).map_err(|e| DatasetError::Format {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let mut records = Vec::new();
    let mut skipped = 0;
    for entry in file.data {
        let Some(answer) = entry.answer else {
            skipped += 1;
            continue;
        };
        let mut golds: Vec<String> = Vec::new();
        if let Some(value) = answer.value {
            if !value.is_empty() {
                golds.push(value);
            }
        }
        for alias in answer.aliases {
            if !alias.is_empty() && !golds.contains(&alias) {
                golds.push(alias);
            }
        }
        if golds.is_empty() {
            skipped += 1;
            continue;
        }
        records.push(QaRecord {
            question_id: entry.question_id,
            question: entry.question,
            gold_answers: golds,
            dataset_tag: DatasetTag::Triviaqa,
            question_type: None,
        });
    }
    Ok(LoadedDataset { records, skipped })
}

/// HotpotQA layout: a JSON array of `{_id, question, answer, ...}`; the
/// multi-hop evidence lists are dropped.
fn load_hotpotqa(path: &Path) -> Result<LoadedDataset, DatasetError> {
    #[derive(Deserialize)]
    struct Entry {
        #[serde(rename = "_id")]
        id: String,
        question: String,
        answer: Option<String>,
    }

    let text = read_to_string(path)?;
    let entries: Vec<Entry> = serde_json::from_str(&text).map_err(|e| DatasetError::Format {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let mut records = Vec::new();
    let mut skipped = 0;
    for entry in entries {
        let Some(answer) = entry.answer.filter(|a| !a.is_empty()) else {
            skipped += 1;
            continue;
        };
        records.push(QaRecord {
            question_id: entry.id,
            question: entry.question,
            gold_answers: vec![answer],
            dataset_tag: DatasetTag::Hotpotqa,
            question_type: None,
        });
    }
    Ok(LoadedDataset { records, skipped })
}

/// A question/answer exemplar shown before the target question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: String,
    pub answer: String,
}

/// Few-shot prompt layout: an instruction preamble followed by exemplar Q/A
/// pairs and the target question. Exemplar answers must stay short-form
/// (at most [`PromptTemplate::MAX_EXEMPLAR_WORDS`] whitespace-separated
/// words) to model the brief answers the pipeline expects back.
///
/// The built-in preamble is a placeholder, not a canonical prompt; runs that
/// care about prompt wording should supply their own via the run config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    preamble: String,
    exemplars: Vec<Exemplar>,
}

impl PromptTemplate {
    pub const MAX_EXEMPLAR_WORDS: usize = 5;

    pub const DEFAULT_PREAMBLE: &'static str =
        "Answer the question with a short factual answer of at most five tokens.";

    pub fn new(
        preamble: impl Into<String>,
        exemplars: Vec<Exemplar>,
    ) -> Result<Self, DatasetError> {
        for exemplar in &exemplars {
            let words = exemplar.answer.split_whitespace().count();
            if words > Self::MAX_EXEMPLAR_WORDS {
                return Err(DatasetError::ExemplarTooLong {
                    answer: exemplar.answer.clone(),
                    words,
                    limit: Self::MAX_EXEMPLAR_WORDS,
                });
            }
        }
        Ok(Self {
            preamble: preamble.into(),
            exemplars,
        })
    }

    /// Preamble-only template (zero-shot degenerate case).
    pub fn zero_shot(preamble: impl Into<String>) -> Self {
        Self {
            preamble: preamble.into(),
            exemplars: Vec::new(),
        }
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::zero_shot(Self::DEFAULT_PREAMBLE)
    }
}

/// Render the prompt: preamble, exemplar Q/A pairs in order, then the target
/// question with an empty answer slot. Byte-deterministic.
pub fn build_prompt(record: &QaRecord, template: &PromptTemplate) -> String {
    let mut prompt = String::new();
    prompt.push_str(&template.preamble);
    for exemplar in &template.exemplars {
        prompt.push_str("\n\nQ: ");
        prompt.push_str(&exemplar.question);
        prompt.push_str("\nA: ");
        prompt.push_str(&exemplar.answer);
    }
    prompt.push_str("\n\nQ: ");
    prompt.push_str(&record.question);
    prompt.push_str("\nA:");
    prompt
}

/// Load a line-delimited label file (`{"question_id": ..., "label": ...}`)
/// mapping question ids to the four supported question types. Unknown labels
/// are rejected with their line number.
pub fn load_type_labels(path: &Path) -> Result<HashMap<String, QuestionType>, DatasetError> {
    #[derive(Deserialize)]
    struct LabelLine {
        question_id: String,
        label: String,
    }

    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut labels = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LabelLine =
            serde_json::from_str(&line).map_err(|e| DatasetError::MalformedLabel {
                line: i + 1,
                detail: e.to_string(),
            })?;
        let label: QuestionType =
            parsed
                .label
                .parse()
                .map_err(|_| DatasetError::UnknownLabel {
                    line: i + 1,
                    label: parsed.label,
                })?;
        labels.insert(parsed.question_id, label);
    }
    Ok(labels)
}
