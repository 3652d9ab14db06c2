//! Shared helpers for the criterion benchmarks.

use frs_core::datasets::{DatasetTag, QaRecord};
use frs_core::TokenDistribution;

/// A renormalized 10-candidate distribution with geometric-ish mass.
pub fn bench_distribution() -> TokenDistribution {
    let weights: Vec<f64> = (0..10).map(|i| 0.6f64.powi(i)).collect();
    let total: f64 = weights.iter().sum();
    let dist = TokenDistribution::from_probabilities(
        weights
            .iter()
            .enumerate()
            .map(|(i, w)| (format!("tok{i}"), w / total)),
    )
    .unwrap();
    frs_core::renormalize(&dist).unwrap()
}

pub fn bench_record(id: &str, gold: &str) -> QaRecord {
    QaRecord {
        question_id: id.into(),
        question: format!("bench question {id}"),
        gold_answers: vec![gold.into()],
        dataset_tag: DatasetTag::Custom,
        question_type: None,
    }
}
