//! Detection scores over output probability vectors. Higher means more
//! in-distribution for both scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    /// Negative Shannon entropy of the probabilities.
    Entropic,
    /// Maximum probability.
    Mps,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 2] = [ScoreKind::Entropic, ScoreKind::Mps];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Entropic => "entropic",
            ScoreKind::Mps => "mps",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "entropic" | "es" => Ok(ScoreKind::Entropic),
            "mps" => Ok(ScoreKind::Mps),
            other => Err(Error::Format(format!(
                "unknown score {other:?} (expected entropic or mps)"
            ))),
        }
    }

    pub fn score(self, p: &[f64]) -> Result<f64> {
        match self {
            ScoreKind::Entropic => entropic_score(p),
            ScoreKind::Mps => max_probability_score(p),
        }
    }
}

/// Checks entries in `[0, 1]` and a sum within `1e-6` of one.
pub fn validate_probabilities(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Validation("empty probability vector".into()));
    }
    if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Validation(format!("probability {v} outside [0, 1]")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::Validation(format!(
            "probabilities sum to {sum}, not 1"
        )));
    }
    Ok(())
}

/// Shannon entropy in nats with `0·ln 0 = 0`. No validation.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// `Σ p ln p`, in `[-ln C, 0]`.
pub fn entropic_score(p: &[f64]) -> Result<f64> {
    validate_probabilities(p)?;
    Ok(-entropy(p))
}

pub fn max_probability_score(p: &[f64]) -> Result<f64> {
    validate_probabilities(p)?;
    Ok(p.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Mean per-row entropy of a `[N × C]` probability matrix.
pub fn mean_entropy(probabilities: &Tensor) -> Result<f64> {
    if probabilities.is_empty() {
        return Err(Error::Validation("no probability rows".into()));
    }
    let mut total = 0.0;
    for row in probabilities.row_iter() {
        validate_probabilities(row)?;
        total += entropy(row);
    }
    Ok(total / probabilities.rows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropic_score_cases() {
        let uniform = vec![0.1; 10];
        assert!((entropic_score(&uniform).unwrap() + 10f64.ln()).abs() < 1e-12);
        assert_eq!(entropic_score(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        let s = entropic_score(&[0.7, 0.2, 0.1]).unwrap();
        let oracle = 0.7f64 * 0.7f64.ln() + 0.2f64 * 0.2f64.ln() + 0.1f64 * 0.1f64.ln();
        assert_eq!(s, oracle);
        assert!((s + 0.801819).abs() < 1e-6);
    }

    #[test]
    fn mps_cases() {
        assert_eq!(max_probability_score(&[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(max_probability_score(&[0.25; 4]).unwrap(), 0.25);
        assert_eq!(max_probability_score(&[0.7, 0.2, 0.1]).unwrap(), 0.7);
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(matches!(
            entropic_score(&[0.5, 0.6]),
            Err(Error::Validation(_))
        ));
        assert!(max_probability_score(&[1.2, -0.2]).is_err());
        assert!(entropic_score(&[]).is_err());
    }

    #[test]
    fn mean_entropy_cases() {
        let onehot = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(mean_entropy(&onehot).unwrap(), 0.0);
        let uniform = Tensor::from_rows(&[[0.25; 4], [0.25; 4]]).unwrap();
        assert!((mean_entropy(&uniform).unwrap() - 4f64.ln()).abs() < 1e-12);
        let third = 1.0 / 3.0;
        let mixed = Tensor::from_rows(&[[0.7, 0.2, 0.1], [third, third, third]]).unwrap();
        assert!((mean_entropy(&mixed).unwrap() - 0.950216).abs() < 1e-6);
    }

    #[test]
    fn ranking_can_disagree_for_three_classes() {
        // a has the larger max probability but also the larger entropy.
        let a = [0.5, 0.25, 0.25];
        let b = [0.49, 0.49, 0.02];
        assert!(max_probability_score(&a).unwrap() > max_probability_score(&b).unwrap());
        assert!(entropic_score(&a).unwrap() < entropic_score(&b).unwrap());
    }
}
