//! Forward-only neural architectures `G(u|x)` over flat parameter vectors.
//!
//! Every model here is a pure function of its parameters and input. There is
//! no backward pass; the optimizer only ever queries forward values.

mod feedforward;
mod linear;
mod rnn;
mod spec;

pub use feedforward::{conv2d_forward, maxpool, Conv2dGeometry, FeedForward, LayerTensors};
pub use linear::LinearMap;
pub use rnn::{RnnMode, RnnModel, RnnOutput, RnnSpec};
pub use spec::{LayerSpec, ModelSpec, Shape};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid layer {index}: {reason}")]
    InvalidLayer { index: usize, reason: String },
    #[error("invalid model: {0}")]
    Invalid(String),
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}

// Published SELU constants (Klambauer et al. 2017).
const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

/// Point-wise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Selu,
    #[default]
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Selu => {
                if x > 0.0 {
                    SELU_LAMBDA * x
                } else {
                    SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0)
                }
            }
            Activation::Identity => x,
        }
    }

    pub fn apply_slice(self, xs: &mut [f64]) {
        if self != Activation::Identity {
            for x in xs {
                *x = self.apply(*x);
            }
        }
    }
}

/// Final map `S` applied to the affine output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMap {
    Softmax,
    #[default]
    Identity,
}

impl OutputMap {
    pub fn apply(self, xs: &mut [f64]) {
        if self == OutputMap::Softmax {
            softmax_in_place(xs);
        }
    }
}

/// Softmax onto the open probability simplex.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// A parametric map evaluated on a batch of inputs.
///
/// Inputs are `batch × input_dim` and outputs `batch × output_dim`, both
/// row-major; the output is the concatenation `[G(u|x_1), …, G(u|x_B)]`.
pub trait ForwardModel: Sync {
    fn param_count(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn forward_batch(&self, params: &[f64], inputs: &[f64], batch: usize) -> Result<Vec<f64>, ModelError>;

    fn forward(&self, params: &[f64], input: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.forward_batch(params, input, 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[1f64.ln(), 2f64.ln(), 3f64.ln()]);
        for (a, b) in p.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let p = softmax(&[1000.0, 0.0]);
        assert!(p.iter().all(|x| x.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] >= 0.0 && p[1] < 1e-300);
    }

    #[test]
    fn activations() {
        assert_eq!(Activation::Relu.apply(-2.0), 0.0);
        assert_eq!(Activation::Relu.apply(2.0), 2.0);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        assert!((Activation::Selu.apply(1.0) - SELU_LAMBDA).abs() < 1e-15);
        assert!((Activation::Selu.apply(-1e3) + SELU_LAMBDA * SELU_ALPHA).abs() < 1e-12);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_lands_in_open_simplex(v in prop::collection::vec(-700.0f64..700.0, 1..12)) {
                let p = softmax(&v);
                let sum: f64 = p.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
                prop_assert!(p.iter().all(|x| *x >= 0.0 && x.is_finite()));
            }

            #[test]
            fn softmax_positive_for_moderate_inputs(v in prop::collection::vec(-300.0f64..300.0, 1..12)) {
                let p = softmax(&v);
                prop_assert!(p.iter().all(|x| *x > 0.0));
            }
        }
    }
}
