//! Persisted run state: append-only line-delimited records, one per
//! (question, temperature) evaluation plus one outcome row per finished
//! sample. Reloading the file lets an interrupted sweep resume without
//! repeating completed work.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::QuestionType;
use crate::protocol::{AccuracyPoint, QuarantinedSample};
use crate::score::BreakResult;

#[derive(Debug, Error)]
pub enum RunStateError {
    #[error("cannot access run state {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("run state line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("run state belongs to config {found}, expected {expected}; pass a fresh output directory or the matching config")]
    ConfigMismatch { found: String, expected: String },
}

/// Finished per-sample outcome: entropy, break result, and the score at
/// every configured strictness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub question_id: String,
    pub entropy: f64,
    pub break_result: BreakResult,
    pub d_values: Vec<f64>,
    pub frs_by_d: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_type: Option<QuestionType>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum RunRecord {
    Meta {
        config_hash: String,
        mode: String,
    },
    Point {
        question_id: String,
        #[serde(flatten)]
        point: AccuracyPoint,
    },
    Outcome(SampleOutcome),
    Quarantine {
        question_id: String,
        error: String,
    },
}

/// Append-only store behind a single serialization point; loads existing
/// records on open so callers can skip completed work.
pub struct RunStore {
    path: PathBuf,
    writer: Mutex<BufWriter<File>>,
    points: Mutex<HashMap<(String, i64), AccuracyPoint>>,
    outcomes: Mutex<HashMap<String, SampleOutcome>>,
    quarantined: Mutex<Vec<QuarantinedSample>>,
}

fn temperature_key(t: f64) -> i64 {
    (t * 1000.0).round() as i64
}

impl RunStore {
    /// Open (or create) the store at `path`, validating that any existing
    /// state belongs to the same config.
    pub fn open(path: &Path, config_hash: &str, mode: &str) -> Result<Self, RunStateError> {
        let mut points = HashMap::new();
        let mut outcomes = HashMap::new();
        let mut quarantined = Vec::new();
        let mut has_meta = false;

        if path.exists() {
            let file = File::open(path).map_err(|source| RunStateError::Io {
                path: path.display().to_string(),
                source,
            })?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|source| RunStateError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: RunRecord =
                    serde_json::from_str(&line).map_err(|e| RunStateError::Malformed {
                        line: i + 1,
                        detail: e.to_string(),
                    })?;
                match record {
                    RunRecord::Meta {
                        config_hash: found, ..
                    } => {
                        has_meta = true;
                        if found != config_hash {
                            return Err(RunStateError::ConfigMismatch {
                                found,
                                expected: config_hash.to_string(),
                            });
                        }
                    }
                    RunRecord::Point { question_id, point } => {
                        points.insert((question_id, temperature_key(point.temperature)), point);
                    }
                    RunRecord::Outcome(outcome) => {
                        outcomes.insert(outcome.question_id.clone(), outcome);
                    }
                    RunRecord::Quarantine { question_id, error } => {
                        quarantined.push(QuarantinedSample { question_id, error });
                    }
                }
            }
        }

        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| RunStateError::Io {
                path: path.display().to_string(),
                source,
            })?;
        let store = Self {
            path: path.to_path_buf(),
            writer: Mutex::new(BufWriter::new(file)),
            points: Mutex::new(points),
            outcomes: Mutex::new(outcomes),
            quarantined: Mutex::new(quarantined),
        };
        if !has_meta {
            store.append(&RunRecord::Meta {
                config_hash: config_hash.to_string(),
                mode: mode.to_string(),
            })?;
        }
        Ok(store)
    }

    fn append(&self, record: &RunRecord) -> Result<(), RunStateError> {
        let line = serde_json::to_string(record).expect("run records serialize");
        let mut writer = self.writer.lock().expect("run store writer lock");
        writer
            .write_all(line.as_bytes())
            .and_then(|()| writer.write_all(b"\n"))
            .and_then(|()| writer.flush())
            .map_err(|source| RunStateError::Io {
                path: self.path.display().to_string(),
                source,
            })
    }

    pub fn completed_point(&self, question_id: &str, temperature: f64) -> Option<AccuracyPoint> {
        self.points
            .lock()
            .expect("points lock")
            .get(&(question_id.to_string(), temperature_key(temperature)))
            .cloned()
    }

    /// All persisted points for a question, in ascending temperature order.
    pub fn completed_points(&self, question_id: &str) -> Vec<AccuracyPoint> {
        let guard = self.points.lock().expect("points lock");
        let mut points: Vec<AccuracyPoint> = guard
            .iter()
            .filter(|((qid, _), _)| qid == question_id)
            .map(|(_, p)| p.clone())
            .collect();
        points.sort_by(|a, b| a.temperature.total_cmp(&b.temperature));
        points
    }

    pub fn completed_outcome(&self, question_id: &str) -> Option<SampleOutcome> {
        self.outcomes
            .lock()
            .expect("outcomes lock")
            .get(question_id)
            .cloned()
    }

    pub fn record_point(
        &self,
        question_id: &str,
        point: &AccuracyPoint,
    ) -> Result<(), RunStateError> {
        self.append(&RunRecord::Point {
            question_id: question_id.to_string(),
            point: point.clone(),
        })?;
        self.points.lock().expect("points lock").insert(
            (question_id.to_string(), temperature_key(point.temperature)),
            point.clone(),
        );
        Ok(())
    }

    pub fn record_outcome(
        &self,
        question_id: &str,
        entropy: f64,
        break_result: BreakResult,
        d_values: &[f64],
        frs_by_d: &[f64],
        question_type: Option<QuestionType>,
    ) -> Result<(), RunStateError> {
        let outcome = SampleOutcome {
            question_id: question_id.to_string(),
            entropy,
            break_result,
            d_values: d_values.to_vec(),
            frs_by_d: frs_by_d.to_vec(),
            question_type,
        };
        self.append(&RunRecord::Outcome(outcome.clone()))?;
        self.outcomes
            .lock()
            .expect("outcomes lock")
            .insert(question_id.to_string(), outcome);
        Ok(())
    }

    pub fn record_quarantine(&self, q: &QuarantinedSample) -> Result<(), RunStateError> {
        self.append(&RunRecord::Quarantine {
            question_id: q.question_id.clone(),
            error: q.error.clone(),
        })?;
        self.quarantined.lock().expect("quarantine lock").push(q.clone());
        Ok(())
    }

    /// Outcomes sorted by question id.
    pub fn outcomes(&self) -> Vec<SampleOutcome> {
        let guard = self.outcomes.lock().expect("outcomes lock");
        let mut outcomes: Vec<SampleOutcome> = guard.values().cloned().collect();
        outcomes.sort_by(|a, b| a.question_id.cmp(&b.question_id));
        outcomes
    }

    /// Every persisted (question, temperature) point, sorted by question id
    /// then temperature.
    pub fn all_points(&self) -> Vec<(String, AccuracyPoint)> {
        let guard = self.points.lock().expect("points lock");
        let mut points: Vec<(String, AccuracyPoint)> = guard
            .iter()
            .map(|((qid, _), p)| (qid.clone(), p.clone()))
            .collect();
        points.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then_with(|| a.1.temperature.total_cmp(&b.1.temperature))
        });
        points
    }

    pub fn quarantined(&self) -> Vec<QuarantinedSample> {
        self.quarantined.lock().expect("quarantine lock").clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(t: f64, accuracy: f64) -> AccuracyPoint {
        AccuracyPoint {
            temperature: t,
            accuracy,
            trial_count: 10,
            certainty_bins: [0; 10],
        }
    }

    #[test]
    fn store_persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runstate.jsonl");
        {
            let store = RunStore::open(&path, "hash1", "linear").unwrap();
            store.record_point("q1", &point(0.2, 1.0)).unwrap();
            store.record_point("q1", &point(0.4, 0.8)).unwrap();
            store
                .record_outcome(
                    "q1",
                    0.3,
                    BreakResult::Broke { t_b: 0.4 },
                    &[1.0, 2.0],
                    &[0.6, 0.55],
                    None,
                )
                .unwrap();
        }
        let store = RunStore::open(&path, "hash1", "linear").unwrap();
        assert!(store.completed_point("q1", 0.2).is_some());
        assert!(store.completed_point("q1", 0.6).is_none());
        assert!(store.completed_point("q2", 0.2).is_none());
        let outcome = store.completed_outcome("q1").unwrap();
        assert_eq!(outcome.frs_by_d, vec![0.6, 0.55]);
        let points = store.completed_points("q1");
        assert_eq!(points.len(), 2);
        assert!(points[0].temperature < points[1].temperature);
    }

    #[test]
    fn mismatched_config_hash_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runstate.jsonl");
        RunStore::open(&path, "hash1", "linear").unwrap();
        assert!(matches!(
            RunStore::open(&path, "other", "linear"),
            Err(RunStateError::ConfigMismatch { .. })
        ));
    }

    #[test]
    fn quarantine_rows_survive_reload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runstate.jsonl");
        {
            let store = RunStore::open(&path, "h", "binary").unwrap();
            store
                .record_quarantine(&QuarantinedSample {
                    question_id: "q9".into(),
                    error: "trial 3 failed".into(),
                })
                .unwrap();
        }
        let store = RunStore::open(&path, "h", "binary").unwrap();
        let q = store.quarantined();
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].question_id, "q9");
    }
}
