//! Output-space loss gradients `∇_{y'} L(y', y)`.
//!
//! Losses over a batch are evaluated per sample on the concatenated
//! prediction and target vectors, so the gradient of a batch is the
//! concatenation of the per-sample gradients.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("negative probability {value} at index {index}")]
    NegativeProbability { index: usize, value: f64 },
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("invalid loss: {0}")]
    Invalid(String),
}

fn check(expected: usize, found: usize) -> Result<(), LossError> {
    if expected == found {
        Ok(())
    } else {
        Err(LossError::DimensionMismatch { expected, found })
    }
}

/// Diagonal noise covariance `Γ`, either `γ·I` or one variance per output
/// coordinate (repeated for every sample of a batch).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gamma {
    Scalar(f64),
    Diagonal(Vec<f64>),
}

impl Default for Gamma {
    fn default() -> Self {
        Gamma::Scalar(1.0)
    }
}

impl Gamma {
    /// Variance of output coordinate `i`; a diagonal repeats across samples.
    pub fn variance(&self, i: usize) -> f64 {
        match self {
            Gamma::Scalar(g) => *g,
            Gamma::Diagonal(d) => d[i % d.len()],
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let ok = match self {
            Gamma::Scalar(g) => *g > 0.0 && g.is_finite(),
            Gamma::Diagonal(d) => !d.is_empty() && d.iter().all(|g| *g > 0.0 && g.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(LossError::Invalid("noise covariance must be positive".into()))
        }
    }
}

pub const DEFAULT_DELTA: f64 = 0.005;

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossSpec {
    /// `½‖y' − y‖²_Γ`.
    SquaredError {
        #[serde(default)]
        gamma: Gamma,
    },
    /// `−⟨y, log(y' + δ)⟩`.
    CrossEntropy {
        #[serde(default = "default_delta")]
        delta: f64,
    },
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec::SquaredError { gamma: Gamma::default() }
    }
}

impl LossSpec {
    pub fn validate(&self) -> Result<(), LossError> {
        match self {
            LossSpec::SquaredError { gamma } => gamma.validate(),
            LossSpec::CrossEntropy { delta } if *delta >= 0.0 && delta.is_finite() => Ok(()),
            LossSpec::CrossEntropy { .. } => Err(LossError::Invalid("delta must be nonnegative".into())),
        }
    }

    /// Gradient with respect to the (concatenated) prediction.
    pub fn gradient(&self, pred: &[f64], target: &[f64]) -> Result<Vec<f64>, LossError> {
        match self {
            LossSpec::SquaredError { gamma } => mse_grad(pred, target, gamma),
            LossSpec::CrossEntropy { delta } => xent_grad(pred, target, *delta),
        }
    }

    /// Writes the gradient into `out`, avoiding an allocation per particle.
    pub fn gradient_into(&self, pred: &[f64], target: &[f64], out: &mut [f64]) -> Result<(), LossError> {
        check(pred.len(), target.len())?;
        check(pred.len(), out.len())?;
        match self {
            LossSpec::SquaredError { gamma } => {
                for (i, ((o, p), y)) in out.iter_mut().zip(pred).zip(target).enumerate() {
                    *o = (p - y) / gamma.variance(i);
                }
            }
            LossSpec::CrossEntropy { delta } => {
                for (i, ((o, p), y)) in out.iter_mut().zip(pred).zip(target).enumerate() {
                    if *p < 0.0 {
                        return Err(LossError::NegativeProbability { index: i, value: *p });
                    }
                    *o = if *y == 0.0 { 0.0 } else { -y / (p + delta) };
                }
            }
        }
        Ok(())
    }

    /// Summed loss over the concatenated samples.
    pub fn value(&self, pred: &[f64], target: &[f64]) -> Result<f64, LossError> {
        check(pred.len(), target.len())?;
        Ok(match self {
            LossSpec::SquaredError { gamma } => {
                0.5 * pred
                    .iter()
                    .zip(target)
                    .enumerate()
                    .map(|(i, (p, y))| (p - y).powi(2) / gamma.variance(i))
                    .sum::<f64>()
            }
            LossSpec::CrossEntropy { delta } => -pred
                .iter()
                .zip(target)
                .filter(|(_, y)| **y != 0.0)
                .map(|(p, y)| y * (p + delta).ln())
                .sum::<f64>(),
        })
    }
}

/// `Γ⁻¹(pred − target)`.
pub fn mse_grad(pred: &[f64], target: &[f64], gamma: &Gamma) -> Result<Vec<f64>, LossError> {
    gamma.validate()?;
    let mut out = vec![0.0; pred.len()];
    LossSpec::SquaredError { gamma: gamma.clone() }.gradient_into(pred, target, &mut out)?;
    Ok(out)
}

/// `(∇)_k = −y_k / (pred_k + δ)`, exactly zero where `y_k = 0`.
pub fn xent_grad(pred: &[f64], target: &[f64], delta: f64) -> Result<Vec<f64>, LossError> {
    let mut out = vec![0.0; pred.len()];
    LossSpec::CrossEntropy { delta }.gradient_into(pred, target, &mut out)?;
    Ok(out)
}

fn argmin_set(values: &[f64]) -> Vec<usize> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * min.abs().max(1e-300);
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v - min <= tol)
        .map(|(i, _)| i)
        .collect()
}

/// Whether minimizing `‖y − p‖₁` and minimizing `‖∇_{y'} L(p, y)‖₁` (cross-entropy
/// with `δ = 0`) pick out the same candidates.
///
/// Ties are detected with a relative tolerance of `1e-12`.
pub fn l1_argmin_agree(candidates: &[Vec<f64>], target: &[f64]) -> Result<bool, LossError> {
    if candidates.is_empty() {
        return Err(LossError::EmptyCandidates);
    }
    let mut residual = Vec::with_capacity(candidates.len());
    let mut grad_norm = Vec::with_capacity(candidates.len());
    for p in candidates {
        check(target.len(), p.len())?;
        residual.push(target.iter().zip(p).map(|(y, q)| (y - q).abs()).sum::<f64>());
        grad_norm.push(xent_grad(p, target, 0.0)?.iter().map(|g| g.abs()).sum::<f64>());
    }
    Ok(argmin_set(&residual) == argmin_set(&grad_norm))
}
