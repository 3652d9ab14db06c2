//! The Factual Robustness Score: a bounded scalar combining an answer's
//! initial entropy with the temperature at which it stops being correct.
//!
//! The raw score rewards surviving high temperatures, scaled by initial
//! confidence `(1 - H)^d`, and subtracts an entropy penalty damped by the
//! same survival term: `f = (1 - H)^d * (t_b + 1) - H / (t_b + 1)`. Its
//! range is `[-1, inf)`; `(f + 1) / (f + 2)` maps it monotonically into
//! `[0, 1)`. Samples that never break on the evaluated grid score exactly 1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("entropy {0} outside [0, 1]")]
    EntropyOutOfRange(f64),
    #[error("strictness exponent {0} must be >= 1")]
    StrictnessTooSmall(f64),
    #[error("breaking temperature {0} must be >= 0")]
    NegativeBreakingTemperature(f64),
}

/// Outcome of a breaking-temperature search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BreakResult {
    /// Accuracy fell strictly below the threshold; `t_b` is the first such
    /// grid temperature.
    Broke { t_b: f64 },
    /// Accuracy stayed at or above the threshold everywhere up to `max_t`,
    /// the top of the evaluated grid.
    NoBreakWithinGrid { max_t: f64 },
}

impl BreakResult {
    pub fn broke(&self) -> bool {
        matches!(self, BreakResult::Broke { .. })
    }

    pub fn breaking_temperature(&self) -> Option<f64> {
        match self {
            BreakResult::Broke { t_b } => Some(*t_b),
            BreakResult::NoBreakWithinGrid { .. } => None,
        }
    }
}

/// Inputs to a per-sample score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessInputs {
    pub entropy_h: f64,
    pub strictness_d: f64,
    pub breaking: BreakResult,
}

impl RobustnessInputs {
    pub fn score(&self) -> Result<f64, ScoreError> {
        frs_for_sample(self.entropy_h, self.strictness_d, self.breaking)
    }
}

fn validate(h: f64, d: f64, t_b: f64) -> Result<(), ScoreError> {
    if h.is_nan() || !(0.0..=1.0).contains(&h) {
        return Err(ScoreError::EntropyOutOfRange(h));
    }
    if d.is_nan() || d < 1.0 {
        return Err(ScoreError::StrictnessTooSmall(d));
    }
    if t_b.is_nan() || t_b < 0.0 {
        return Err(ScoreError::NegativeBreakingTemperature(t_b));
    }
    Ok(())
}

/// Raw robustness score in `[-1, inf)`.
pub fn frs_raw(h: f64, d: f64, t_b: f64) -> Result<f64, ScoreError> {
    validate(h, d, t_b)?;
    Ok((1.0 - h).powf(d) * (t_b + 1.0) - h / (t_b + 1.0))
}

/// Min-max normalized score in `[0, 1)`: `(f + 1) / (f + 2)` with the
/// minimum `f = -1` mapping to 0 and `f -> inf` approaching 1.
pub fn frs_scaled(h: f64, d: f64, t_b: f64) -> Result<f64, ScoreError> {
    let f = frs_raw(h, d, t_b)?;
    Ok((f + 1.0) / (f + 2.0))
}

/// Score for one sample: the normalized score at its breaking temperature,
/// or exactly 1.0 when the sample never broke on the evaluated grid.
pub fn frs_for_sample(h: f64, d: f64, breaking: BreakResult) -> Result<f64, ScoreError> {
    match breaking {
        BreakResult::Broke { t_b } => frs_scaled(h, d, t_b),
        BreakResult::NoBreakWithinGrid { .. } => {
            validate(h, d, 0.0)?;
            Ok(1.0)
        }
    }
}

/// One question's robustness outcome. `frs` is always the score recomputed
/// from `(entropy_h, d, break_result)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSample {
    pub question_id: String,
    pub entropy_h: f64,
    pub break_result: BreakResult,
    pub frs: f64,
    pub d: f64,
    pub question_type: Option<crate::datasets::QuestionType>,
}

impl RobustnessSample {
    pub fn new(
        question_id: String,
        entropy_h: f64,
        break_result: BreakResult,
        d: f64,
        question_type: Option<crate::datasets::QuestionType>,
    ) -> Result<Self, ScoreError> {
        let frs = frs_for_sample(entropy_h, d, break_result)?;
        Ok(Self {
            question_id,
            entropy_h,
            break_result,
            frs,
            d,
            question_type,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_score_endpoints() {
        assert_eq!(frs_raw(0.0, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(frs_raw(1.0, 1.0, 0.0).unwrap(), -1.0);
    }

    #[test]
    fn raw_score_hand_values() {
        // 0.8 * 2 - 0.2 / 2
        assert!((frs_raw(0.2, 1.0, 1.0).unwrap() - 1.5).abs() < 1e-12);
        // 0.8^5 * 2 - 0.1
        assert!((frs_raw(0.2, 5.0, 1.0).unwrap() - 0.55536).abs() < 1e-12);
    }

    #[test]
    fn raw_score_is_linear_at_zero_break() {
        // f(h, 1, 0) == 1 - 2h
        for i in 0..=20 {
            let h = i as f64 / 20.0;
            assert!((frs_raw(h, 1.0, 0.0).unwrap() - (1.0 - 2.0 * h)).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_score_known_points() {
        assert_eq!(frs_scaled(1.0, 1.0, 0.0).unwrap(), 0.0);
        assert!((frs_scaled(0.0, 1.0, 0.0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((frs_scaled(0.2, 1.0, 1.0).unwrap() - 2.5 / 3.5).abs() < 1e-12);
        assert!((frs_scaled(0.2, 1.0, 1.0).unwrap() - 0.7143).abs() < 5e-5);
    }

    #[test]
    fn sample_score_no_break_is_exactly_one() {
        let nb = BreakResult::NoBreakWithinGrid { max_t: 2.0 };
        assert_eq!(frs_for_sample(0.3, 1.0, nb).unwrap(), 1.0);
        assert_eq!(frs_for_sample(0.999, 50.0, nb).unwrap(), 1.0);
    }

    #[test]
    fn sample_score_broke_cases() {
        let broke = |t_b| BreakResult::Broke { t_b };
        assert!((frs_for_sample(0.2, 1.0, broke(1.0)).unwrap() - 0.7143).abs() < 5e-5);
        assert_eq!(frs_for_sample(1.0, 1.0, broke(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn domain_violations_are_rejected() {
        assert!(frs_raw(-0.1, 1.0, 0.0).is_err());
        assert!(frs_raw(1.1, 1.0, 0.0).is_err());
        assert!(frs_raw(0.5, 0.9, 0.0).is_err());
        assert!(frs_raw(0.5, 1.0, -0.2).is_err());
        assert!(frs_raw(f64::NAN, 1.0, 0.0).is_err());
    }

    #[test]
    fn sample_recomputation_invariant() {
        let s = RobustnessSample::new(
            "q1".into(),
            0.37,
            BreakResult::Broke { t_b: 1.2 },
            1.0,
            None,
        )
        .unwrap();
        assert_eq!(s.frs, frs_for_sample(0.37, 1.0, s.break_result).unwrap());
        let inputs = RobustnessInputs {
            entropy_h: 0.37,
            strictness_d: 1.0,
            breaking: s.break_result,
        };
        assert_eq!(inputs.score().unwrap(), s.frs);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn raw_score_bounded_below(h in 0.0f64..=1.0, d in 1.0f64..=50.0, t_b in 0.0f64..=2.0) {
                let f = frs_raw(h, d, t_b).unwrap();
                prop_assert!(f >= -1.0);
            }

            #[test]
            fn raw_strictly_increasing_in_break_temperature(
                h in 0.0f64..=1.0, d in 1.0f64..=50.0, t in 0.0f64..1.8
            ) {
                let lo = frs_raw(h, d, t).unwrap();
                let hi = frs_raw(h, d, t + 0.2).unwrap();
                prop_assert!(hi > lo, "f({h},{d},{}) = {hi} not above f({h},{d},{t}) = {lo}", t + 0.2);
            }

            #[test]
            fn raw_strictly_decreasing_in_entropy(
                h in 0.0f64..0.99, d in 1.0f64..=50.0, t_b in 0.0f64..=2.0
            ) {
                let lo = frs_raw(h + 0.01, d, t_b).unwrap();
                let hi = frs_raw(h, d, t_b).unwrap();
                prop_assert!(hi > lo);
            }

            #[test]
            fn raw_nonincreasing_in_strictness(
                h in 0.01f64..=0.99, d in 1.0f64..=49.0, t_b in 0.0f64..=2.0
            ) {
                let loose = frs_raw(h, d, t_b).unwrap();
                let strict = frs_raw(h, d + 1.0, t_b).unwrap();
                prop_assert!(strict <= loose + 1e-12);
            }

            #[test]
            fn strictness_irrelevant_at_entropy_extremes(d in 1.0f64..=50.0, t_b in 0.0f64..=2.0) {
                prop_assert_eq!(frs_raw(0.0, d, t_b).unwrap(), frs_raw(0.0, 1.0, t_b).unwrap());
                prop_assert_eq!(frs_raw(1.0, d, t_b).unwrap(), frs_raw(1.0, 1.0, t_b).unwrap());
            }

            #[test]
            fn scaled_in_unit_interval_and_order_preserving(
                h1 in 0.0f64..=1.0, d1 in 1.0f64..=50.0, t1 in 0.0f64..=2.0,
                h2 in 0.0f64..=1.0, d2 in 1.0f64..=50.0, t2 in 0.0f64..=2.0
            ) {
                let (r1, s1) = (frs_raw(h1, d1, t1).unwrap(), frs_scaled(h1, d1, t1).unwrap());
                let (r2, s2) = (frs_raw(h2, d2, t2).unwrap(), frs_scaled(h2, d2, t2).unwrap());
                prop_assert!((0.0..1.0).contains(&s1));
                prop_assert!((0.0..1.0).contains(&s2));
                if r1 < r2 {
                    prop_assert!(s1 < s2);
                } else if r1 > r2 {
                    prop_assert!(s1 > s2);
                }
            }

            #[test]
            fn sample_score_in_unit_interval(
                h in 0.0f64..=1.0, d in 1.0f64..=50.0, t_b in 0.0f64..=2.0, broke in proptest::bool::ANY
            ) {
                let br = if broke {
                    BreakResult::Broke { t_b }
                } else {
                    BreakResult::NoBreakWithinGrid { max_t: 2.0 }
                };
                let s = frs_for_sample(h, d, br).unwrap();
                prop_assert!((0.0..=1.0).contains(&s));
                if s == 1.0 {
                    prop_assert!(!br.broke(), "only no-break samples may reach 1.0");
                }
            }
        }
    }
}
