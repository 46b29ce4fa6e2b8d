use crate::losses::LossSpec;
use crate::models::{ForwardModel, RnnModel};
use crate::numerics::SeededRng;
use crate::prior::GaussianPrior;

use super::update::{eki_step_with, meki_step_with};
use super::{step, Batch, EkiConfig, EkiError, EnsembleState, StepInfo};

/// One filtering update on a single data pair `(x, y)`. Parameters persist
/// between calls; there is no state equation beyond the identity.
#[allow(clippy::too_many_arguments)]
pub fn online_step<M: ForwardModel + ?Sized>(
    state: &mut EnsembleState,
    model: &M,
    loss: &LossSpec,
    x: &[f64],
    y: &[f64],
    cfg: &EkiConfig,
    prior: &GaussianPrior,
    rng: &mut SeededRng,
) -> Result<StepInfo, EkiError> {
    step(state, model, loss, &Batch::new(x, y, 1), cfg, prior, rng)
}

/// Result of one online recurrent update.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineOutcome {
    /// Mean-particle prediction made before the update.
    pub prediction: Vec<f64>,
    pub info: StepInfo,
}

/// Online training of a recurrent network that carries its hidden state from
/// one sample to the next.
///
/// Every particle advances the shared hidden state with its own parameters
/// during its forward pass. After the update the persisted state is advanced
/// with the mean particle.
#[derive(Debug, Clone)]
pub struct OnlineRnn {
    model: RnnModel,
    hidden: Vec<f64>,
}

impl OnlineRnn {
    /// Starts from `h₀ = 0`.
    pub fn new(model: RnnModel) -> Self {
        let hidden = vec![0.0; model.spec().hidden_dim];
        Self { model, hidden }
    }

    pub fn model(&self) -> &RnnModel {
        &self.model
    }

    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }

    /// Output for input `x` from the persisted hidden state, without advancing it.
    pub fn predict(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        self.model.readout(params, &self.model.step(params, &self.hidden, x))
    }

    /// Advances the persisted hidden state with `params` and returns the output.
    pub fn advance(&mut self, params: &[f64], x: &[f64]) -> Vec<f64> {
        self.hidden = self.model.step(params, &self.hidden, x);
        self.model.readout(params, &self.hidden)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        state: &mut EnsembleState,
        loss: &LossSpec,
        x: &[f64],
        y: &[f64],
        cfg: &EkiConfig,
        prior: &GaussianPrior,
        rng: &mut SeededRng,
    ) -> Result<OnlineOutcome, EkiError> {
        let spec = self.model.spec();
        if x.len() != spec.input_dim || y.len() != spec.output_dim {
            return Err(EkiError::OutputMismatch {
                expected: spec.input_dim + spec.output_dim,
                found: x.len() + y.len(),
            });
        }
        let prediction = self.predict(&state.mean(), x);
        let forward = |u: &[f64]| Ok(self.predict(u, x));
        let info = if state.momenta().is_some() {
            meki_step_with(state, y, loss, cfg, prior, rng, forward)?
        } else {
            eki_step_with(state, y, loss, cfg, prior, rng, forward)?
        };
        self.advance(&state.mean(), x);
        Ok(OnlineOutcome { prediction, info })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LinearMap;
    use crate::numerics::Matrix;

    #[test]
    fn repeated_sample_drives_scalar_model_to_data() {
        // G(u) = 2u, y = 3: the data-consistent value is 1.5
        let model = LinearMap::new(Matrix::from_rows(&[[2.0]]).unwrap());
        let rows: Vec<[f64; 1]> = (0..12).map(|i| [i as f64 / 4.0 - 1.0]).collect();
        let mut state = EnsembleState::from_particles(Matrix::from_rows(&rows).unwrap(), false).unwrap();
        let prior = GaussianPrior::isotropic(1, 1.0);
        let cfg = EkiConfig::default();
        let mut rng = SeededRng::new(0);

        // straight-line scalar recursion of the same scheme
        let mut u: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let mut errors = Vec::new();
        for _ in 0..500 {
            online_step(&mut state, &model, &LossSpec::default(), &[], &[3.0], &cfg, &prior, &mut rng).unwrap();
            let n = u.len() as f64;
            let ubar = u.iter().sum::<f64>() / n;
            let gc: Vec<f64> = u.iter().map(|v| 2.0 * (v - ubar)).collect();
            let grad: Vec<f64> = u.iter().map(|v| 2.0 * v - 3.0).collect();
            let d_norm = gc.iter().map(|a| grad.iter().map(|b| (a * b).powi(2)).sum::<f64>()).sum::<f64>().sqrt();
            let h = 2.0 / (d_norm + 0.5);
            let shift: Vec<f64> = grad
                .iter()
                .map(|g| h * g * gc.iter().zip(&u).map(|(c, v)| c * (v - ubar)).sum::<f64>())
                .collect();
            for (v, s) in u.iter_mut().zip(shift) {
                *v -= s;
            }
            errors.push((state.mean()[0] - 1.5).abs());
        }
        for (a, b) in state.particles().col(0).iter().zip(&u) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(errors[499] < errors[49] && errors[49] < errors[0]);
        assert!(errors[499] < 5e-3, "{errors:?}");
    }

    #[test]
    fn uninformative_sample_leaves_state() {
        // identical outputs for every particle give D = 0
        let model = LinearMap::new(Matrix::from_rows(&[[0.0, 0.0]]).unwrap());
        let rows = [[1.0, 2.0], [3.0, -1.0], [0.0, 0.5]];
        let mut state = EnsembleState::from_particles(Matrix::from_rows(&rows).unwrap(), false).unwrap();
        let before = state.particles().clone();
        let prior = GaussianPrior::isotropic(2, 1.0);
        online_step(
            &mut state,
            &model,
            &LossSpec::default(),
            &[],
            &[1.0],
            &EkiConfig::default(),
            &prior,
            &mut SeededRng::new(0),
        )
        .unwrap();
        assert_eq!(state.particles(), &before);
    }

    #[test]
    fn hidden_state_follows_mean_particle() {
        use crate::models::{Activation, OutputMap, RnnMode, RnnSpec};
        let model = RnnModel::new(RnnSpec {
            input_dim: 1,
            hidden_dim: 3,
            layers: 1,
            output_dim: 1,
            activation: Activation::Tanh,
            output_map: OutputMap::Identity,
            mode: RnnMode::LastOutput,
            seq_len: 1,
        })
        .unwrap();
        let prior = model.xavier_prior();
        let mut rng = SeededRng::new(3);
        let mut state = crate::eki::init_ensemble(&prior, 12, false, &mut rng).unwrap();
        let mut online = OnlineRnn::new(model.clone());
        let cfg = EkiConfig::default();
        let out = online
            .step(&mut state, &LossSpec::default(), &[0.5], &[0.2], &cfg, &prior, &mut rng)
            .unwrap();
        assert_eq!(out.info.ensemble_size, 12);
        let expect = model.step(&state.mean(), &[0.0; 3], &[0.5]);
        assert_eq!(online.hidden(), expect.as_slice());
    }
}
