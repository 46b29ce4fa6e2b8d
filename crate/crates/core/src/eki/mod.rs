//! Ensemble Kalman inversion.
//!
//! An ensemble of `J` parameter vectors is moved by
//! `u⁽ʲ⁾ ← u⁽ʲ⁾ − h Σ_k D_kj u⁽ᵏ⁾` with the coupling matrix
//! `D_kj = ⟨G(u⁽ᵏ⁾) − Ḡ, ∇_{y'}L(G(u⁽ʲ⁾), y)⟩` and the adaptive step
//! `h = h₀ / (‖D‖_F + ε)`. Only forward evaluations of the model are needed.

mod online;
mod randomize;
mod schedule;
mod update;

pub use online::{online_step, OnlineOutcome, OnlineRnn};
pub use randomize::{expand_ensemble, randomize_around_mean, randomize_per_step};
pub use schedule::{batch_sizes, run_epoch, EpochStats};
pub use update::{adaptive_step, coupling_matrix, eki_step, meki_step, step, Batch, StepInfo};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::LossError;
use crate::models::ModelError;
use crate::numerics::{mean_rows, Matrix, NumericsError, SeededRng};
use crate::prior::GaussianPrior;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EkiError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("non-finite {stage} for particle {particle}")]
    NonFinite { stage: &'static str, particle: usize },
    #[error("forward map returned {found} values, expected {expected}")]
    OutputMismatch { expected: usize, found: usize },
    #[error("ensemble has no momenta; momentum steps need a state built with momentum")]
    MissingMomenta,
    #[error("ensemble carries momenta; use the momentum step")]
    UnexpectedMomenta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Randomization {
    #[default]
    None,
    /// Prior noise with covariance `√h·C₀` after every step.
    PerStep,
    /// Redraw every particle around the ensemble mean at the end of an epoch.
    AroundMean,
}

fn default_h0() -> f64 {
    2.0
}

fn default_epsilon() -> f64 {
    0.5
}

fn default_batch() -> usize {
    600
}

fn default_ensemble() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EkiConfig {
    #[serde(default = "default_h0")]
    pub h0: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Momentum factor `λ`; `0` gives plain EKI unless momenta are requested.
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub use_momentum: bool,
    #[serde(default)]
    pub randomization: Randomization,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_ensemble")]
    pub ensemble_size: usize,
    /// Particles added at every epoch boundary.
    #[serde(default)]
    pub growth: usize,
    #[serde(default)]
    pub max_ensemble: Option<usize>,
    /// Permit per-step noise together with epoch-end regeneration.
    #[serde(default)]
    pub mixed_noise: bool,
}

impl Default for EkiConfig {
    fn default() -> Self {
        Self {
            h0: default_h0(),
            epsilon: default_epsilon(),
            momentum: 0.0,
            use_momentum: false,
            randomization: Randomization::None,
            batch_size: default_batch(),
            ensemble_size: default_ensemble(),
            growth: 0,
            max_ensemble: None,
            mixed_noise: false,
        }
    }
}

impl EkiConfig {
    pub fn validate(&self) -> Result<(), EkiError> {
        let fail = |m: &str| Err(EkiError::Config(m.into()));
        if !(self.h0 > 0.0 && self.h0.is_finite()) {
            return fail("h0 must be positive");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return fail("epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1");
        }
        if self.ensemble_size < 2 {
            return fail("ensemble size must be at least 2");
        }
        if self.max_ensemble.is_some_and(|m| m < self.ensemble_size) {
            return fail("max_ensemble is smaller than ensemble_size");
        }
        if self.randomization == Randomization::PerStep && self.growth > 0 && !self.mixed_noise {
            return fail("per-step noise and ensemble expansion need mixed_noise = true");
        }
        Ok(())
    }

    pub fn momentum_mode(&self) -> bool {
        self.use_momentum || self.momentum > 0.0
    }

    pub fn max_ensemble(&self) -> usize {
        self.max_ensemble.unwrap_or(usize::MAX)
    }
}

/// `J` particles (rows), plus look-ahead points `v` in momentum mode.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub(crate) particles: Matrix,
    pub(crate) momenta: Option<Matrix>,
    pub step: u64,
    pub epoch: u64,
}

impl EnsembleState {
    pub fn from_particles(particles: Matrix, momentum: bool) -> Result<Self, EkiError> {
        if particles.rows() < 2 {
            return Err(EkiError::Config("ensemble size must be at least 2".into()));
        }
        let momenta = momentum.then(|| particles.clone());
        Ok(Self {
            particles,
            momenta,
            step: 0,
            epoch: 0,
        })
    }

    pub fn particles(&self) -> &Matrix {
        &self.particles
    }

    pub fn particle(&self, j: usize) -> &[f64] {
        self.particles.row(j)
    }

    /// Look-ahead points `v⁽ʲ⁾` of the momentum scheme.
    pub fn momenta(&self) -> Option<&Matrix> {
        self.momenta.as_ref()
    }

    pub fn size(&self) -> usize {
        self.particles.rows()
    }

    pub fn dim(&self) -> usize {
        self.particles.cols()
    }

    /// Mean particle, used for prediction.
    pub fn mean(&self) -> Vec<f64> {
        ensemble_mean(self)
    }

    pub(crate) fn replace_particles(&mut self, particles: Matrix) {
        if self.momenta.is_some() {
            self.momenta = Some(particles.clone());
        }
        self.particles = particles;
    }
}

/// `J` independent prior draws. In momentum mode the look-ahead points start
/// at the particles, i.e. with zero velocity.
pub fn init_ensemble(
    prior: &GaussianPrior,
    size: usize,
    momentum: bool,
    rng: &mut SeededRng,
) -> Result<EnsembleState, EkiError> {
    if size < 2 {
        return Err(EkiError::Config("ensemble size must be at least 2".into()));
    }
    let mut data = Vec::with_capacity(size * prior.dim());
    for _ in 0..size {
        data.extend(prior.sample(rng));
    }
    EnsembleState::from_particles(Matrix::new(size, prior.dim(), data)?, momentum)
}

/// Coordinate-wise average of the particles.
pub fn ensemble_mean(state: &EnsembleState) -> Vec<f64> {
    mean_rows(&state.particles)
}
