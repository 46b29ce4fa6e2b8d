//! Gaussian prior measures over parameter vectors.

use serde::{Deserialize, Serialize};

use crate::numerics::{Matrix, SeededRng};

/// One diagonal block of a block-isotropic covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorBlock {
    pub len: usize,
    pub variance: f64,
}

/// Square-root factor `L` of a covariance `C = L·Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceFactor {
    /// Consecutive blocks, each a scaled identity `variance·I`.
    Blocks(Vec<PriorBlock>),
    /// Explicit `dim × rank` factor.
    Dense(Matrix),
}

/// `N(mean, L·Lᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    mean: Vec<f64>,
    factor: CovarianceFactor,
}

impl GaussianPrior {
    /// Panics if the factor does not match `mean.len()`.
    pub fn new(mean: Vec<f64>, factor: CovarianceFactor) -> Self {
        let rows = match &factor {
            CovarianceFactor::Blocks(b) => b.iter().map(|b| b.len).sum(),
            CovarianceFactor::Dense(m) => m.rows(),
        };
        assert_eq!(rows, mean.len(), "prior factor does not match mean");
        Self { mean, factor }
    }

    /// Zero-mean prior with per-block variances.
    pub fn from_blocks(blocks: Vec<PriorBlock>) -> Self {
        let dim = blocks.iter().map(|b| b.len).sum();
        Self::new(vec![0.0; dim], CovarianceFactor::Blocks(blocks))
    }

    /// Zero-mean isotropic prior `variance·I`.
    pub fn isotropic(dim: usize, variance: f64) -> Self {
        Self::from_blocks(vec![PriorBlock { len: dim, variance }])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn factor(&self) -> &CovarianceFactor {
        &self.factor
    }

    pub fn blocks(&self) -> Option<&[PriorBlock]> {
        match &self.factor {
            CovarianceFactor::Blocks(b) => Some(b),
            CovarianceFactor::Dense(_) => None,
        }
    }

    /// Adds `std_scale · L·z` to `out`, i.e. noise with covariance `std_scale²·C`.
    pub fn add_noise(&self, out: &mut [f64], std_scale: f64, rng: &mut SeededRng) {
        assert_eq!(out.len(), self.dim());
        match &self.factor {
            CovarianceFactor::Blocks(blocks) => {
                let mut offset = 0;
                for b in blocks {
                    let sd = b.variance.sqrt() * std_scale;
                    for v in &mut out[offset..offset + b.len] {
                        *v += sd * rng.standard_normal();
                    }
                    offset += b.len;
                }
            }
            CovarianceFactor::Dense(l) => {
                let mut z = vec![0.0; l.cols()];
                rng.fill_standard_normal(&mut z);
                for (r, v) in out.iter_mut().enumerate() {
                    let row = l.row(r);
                    *v += std_scale * row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }

    /// One draw from the prior.
    pub fn sample(&self, rng: &mut SeededRng) -> Vec<f64> {
        let mut out = self.mean.clone();
        self.add_noise(&mut out, 1.0, rng);
        out
    }

    /// Diagonal of the covariance.
    pub fn variance_diag(&self) -> Vec<f64> {
        match &self.factor {
            CovarianceFactor::Blocks(blocks) => blocks
                .iter()
                .flat_map(|b| std::iter::repeat_n(b.variance, b.len))
                .collect(),
            CovarianceFactor::Dense(l) => l
                .row_iter()
                .map(|r| r.iter().map(|x| x * x).sum())
                .collect(),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.variance_diag().iter().all(|v| *v == 0.0)
    }
}
