//! Dense linear algebra, seeded randomness and Gaussian sampling.

mod eig;
mod matrix;
mod rng;

pub use eig::{sym_eig, SymEig, SYMMETRY_TOL};
pub use matrix::{dot, frobenius_norm, norm2, Matrix};
pub(crate) use matrix::gemm;
pub use rng::{sample_gaussian, SeededRng, RNG_ALGORITHM};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("non-finite entry")]
    NonFinite,
}

/// Coordinate-wise mean of equally long rows, summed in row order.
pub fn mean_rows(m: &Matrix) -> Vec<f64> {
    let mut mean = vec![0.0; m.cols()];
    for r in m.row_iter() {
        for (acc, v) in mean.iter_mut().zip(r) {
            *acc += v;
        }
    }
    let n = m.rows().max(1) as f64;
    for v in &mut mean {
        *v /= n;
    }
    mean
}
