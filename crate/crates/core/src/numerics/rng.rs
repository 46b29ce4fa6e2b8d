//! Seeded, portable randomness.
//!
//! Every random draw in the crate goes through [`SeededRng`], which wraps the
//! ChaCha8 stream cipher generator (`rand_chacha::ChaCha8Rng`). ChaCha8 output
//! is specified bit-for-bit and independent of platform and endianness, so a
//! seed fully determines an experiment. OS entropy is never consulted.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Matrix, NumericsError};

/// Name of the generator algorithm, recorded alongside experiment output.
pub const RNG_ALGORITHM: &str = "ChaCha8";

#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent sub-stream `stream` of the same seed.
    ///
    /// Sub-streams are a pure function of `(seed, stream)`, so workers can
    /// derive their generators without coordinating.
    pub fn substream(&self, stream: u64) -> SeededRng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        SeededRng {
            seed: self.seed,
            inner,
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = StandardNormal.sample(&mut self.inner);
        }
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Draws `n` samples `mean + factor·z` with `z` standard normal.
///
/// `factor` is any square root of the covariance (rows = `mean.len()`); it may
/// have fewer columns than rows for degenerate covariances.
pub fn sample_gaussian(
    mean: &[f64],
    factor: &Matrix,
    n: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Vec<f64>>, NumericsError> {
    if factor.rows() != mean.len() {
        return Err(NumericsError::DimensionMismatch {
            expected: mean.len(),
            found: factor.rows(),
        });
    }
    let mut z = vec![0.0; factor.cols()];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        rng.fill_standard_normal(&mut z);
        let mut s = factor.matvec(&z)?;
        for (x, m) in s.iter_mut().zip(mean) {
            *x += m;
        }
        out.push(s);
    }
    Ok(out)
}
