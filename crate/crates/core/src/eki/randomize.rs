use crate::numerics::{Matrix, SeededRng};
use crate::prior::GaussianPrior;

use super::{ensemble_mean, EnsembleState};

/// Adds `η⁽ʲ⁾ ~ N(0, √h·C₀)` to every particle, or to every look-ahead point
/// in momentum mode. The noise standard deviation therefore scales as `h^{1/4}`.
pub fn randomize_per_step(state: &mut EnsembleState, prior: &GaussianPrior, h: f64, rng: &mut SeededRng) {
    assert!(h > 0.0, "step size must be positive");
    let scale = h.powf(0.25);
    let target = state.momenta.as_mut().unwrap_or(&mut state.particles);
    let cols = target.cols();
    for row in target.as_mut_slice().chunks_mut(cols.max(1)) {
        prior.add_noise(row, scale, rng);
    }
}

fn regenerate(mean: &[f64], size: usize, prior: &GaussianPrior, rng: &mut SeededRng) -> Matrix {
    let mut data = Vec::with_capacity(size * mean.len());
    for _ in 0..size {
        let start = data.len();
        data.extend_from_slice(mean);
        prior.add_noise(&mut data[start..], 1.0, rng);
    }
    Matrix::new(size, mean.len(), data).expect("finite ensemble mean and prior")
}

/// `u⁽ʲ⁾ ← ū + η⁽ʲ⁾` with `η⁽ʲ⁾` drawn from the centered prior. Look-ahead
/// points are reset onto the new particles.
pub fn randomize_around_mean(state: &mut EnsembleState, prior: &GaussianPrior, rng: &mut SeededRng) {
    let mean = ensemble_mean(state);
    let size = state.size();
    state.replace_particles(regenerate(&mean, size, prior, rng));
}

/// Regenerates the ensemble around its mean with `min(J + growth, max)`
/// particles.
pub fn expand_ensemble(
    state: &mut EnsembleState,
    prior: &GaussianPrior,
    growth: usize,
    max: usize,
    rng: &mut SeededRng,
) {
    let mean = ensemble_mean(state);
    let size = state.size().saturating_add(growth).min(max).max(2);
    state.replace_particles(regenerate(&mean, size, prior, rng));
}
