use log::warn;
use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::losses::LossSpec;
use crate::models::ForwardModel;
use crate::numerics::SeededRng;
use crate::prior::GaussianPrior;

use super::{expand_ensemble, randomize_around_mean, step, Batch, EkiConfig, EkiError, EnsembleState, Randomization};

/// Bookkeeping for one pass over the training data.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: u64,
    pub batch_sizes: Vec<usize>,
    pub mean_h: f64,
    pub retries: usize,
    /// Ensemble size after the epoch-end regeneration.
    pub ensemble_size: usize,
}

impl EpochStats {
    pub fn steps(&self) -> usize {
        self.batch_sizes.len()
    }
}

/// Sizes of the `⌈n/b⌉` consecutive batches covering `n` samples.
pub fn batch_sizes(n: usize, b: usize) -> Vec<usize> {
    assert!(b > 0, "batch size must be positive");
    (0..n.div_ceil(b)).map(|i| b.min(n - i * b)).collect()
}

/// Shuffles the data, takes one step per mini-batch and applies the
/// configured epoch-end regeneration.
///
/// A step that produces non-finite values is retried once after redrawing the
/// ensemble around its mean; a second failure aborts the epoch.
pub fn run_epoch<M: ForwardModel + ?Sized>(
    state: &mut EnsembleState,
    data: &Dataset,
    model: &M,
    loss: &LossSpec,
    cfg: &EkiConfig,
    prior: &GaussianPrior,
    rng: &mut SeededRng,
) -> Result<EpochStats, EkiError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(EkiError::Config("empty dataset".into()));
    }
    if data.input_dim != model.input_dim() || data.target_dim != model.output_dim() {
        return Err(EkiError::Config(format!(
            "dataset is {}→{} but the model is {}→{}",
            data.input_dim,
            data.target_dim,
            model.input_dim(),
            model.output_dim()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let sizes = batch_sizes(order.len(), cfg.batch_size);
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut h_sum = 0.0;
    let mut retries = 0;
    let mut start = 0;
    for &size in &sizes {
        inputs.clear();
        targets.clear();
        for &i in &order[start..start + size] {
            inputs.extend_from_slice(data.input(i));
            targets.extend_from_slice(data.target(i));
        }
        start += size;
        let batch = Batch::new(&inputs, &targets, size);
        let info = match step(state, model, loss, &batch, cfg, prior, rng) {
            Err(EkiError::NonFinite { stage, particle }) => {
                warn!("non-finite {stage} for particle {particle}; redrawing ensemble and retrying batch");
                retries += 1;
                randomize_around_mean(state, prior, rng);
                step(state, model, loss, &batch, cfg, prior, rng)?
            }
            other => other?,
        };
        h_sum += info.h;
    }
    state.epoch += 1;
    if cfg.growth > 0 {
        expand_ensemble(state, prior, cfg.growth, cfg.max_ensemble(), rng);
    } else if cfg.randomization == Randomization::AroundMean {
        randomize_around_mean(state, prior, rng);
    }
    Ok(EpochStats {
        epoch: state.epoch,
        mean_h: h_sum / sizes.len() as f64,
        batch_sizes: sizes,
        retries,
        ensemble_size: state.size(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eki::init_ensemble;
    use crate::models::{Activation, FeedForward, ModelSpec, OutputMap};

    #[test]
    fn batch_partition() {
        assert_eq!(batch_sizes(60_000, 600).len(), 100);
        assert_eq!(batch_sizes(10, 3), vec![3, 3, 3, 1]);
        assert_eq!(batch_sizes(5, 50), vec![5]);
        assert_eq!(batch_sizes(5, 5), vec![5]);
    }

    fn toy() -> (Dataset, FeedForward) {
        let inputs: Vec<f64> = (0..20).map(|i| (i as f64 / 10.0) - 1.0).collect();
        let targets: Vec<f64> = inputs.iter().map(|x| 0.5 * x + 0.25).collect();
        let model = FeedForward::new(ModelSpec::dense(&[1, 1], Activation::Identity, OutputMap::Identity)).unwrap();
        (Dataset::new(inputs, targets, 1, 1).unwrap(), model)
    }

    #[test]
    fn epoch_fits_affine_toy_problem() {
        let (data, model) = toy();
        let cfg = EkiConfig {
            batch_size: 7,
            ensemble_size: 10,
            ..Default::default()
        };
        let prior = model.xavier_prior();
        let mut rng = SeededRng::new(1);
        let mut state = init_ensemble(&prior, cfg.ensemble_size, false, &mut rng).unwrap();
        let loss = LossSpec::default();
        let mut stats = None;
        for _ in 0..200 {
            stats = Some(run_epoch(&mut state, &data, &model, &loss, &cfg, &prior, &mut rng).unwrap());
        }
        let stats = stats.unwrap();
        assert_eq!(stats.batch_sizes, vec![7, 7, 6]);
        assert_eq!(stats.epoch, 200);
        let mean = state.mean();
        assert!((mean[0] - 0.5).abs() < 1e-3 && (mean[1] - 0.25).abs() < 1e-3, "{mean:?}");
    }

    #[test]
    fn expansion_at_epoch_end() {
        let (data, model) = toy();
        let cfg = EkiConfig {
            batch_size: 20,
            ensemble_size: 4,
            growth: 3,
            max_ensemble: Some(9),
            ..Default::default()
        };
        let prior = model.xavier_prior();
        let mut rng = SeededRng::new(2);
        let mut state = init_ensemble(&prior, 4, false, &mut rng).unwrap();
        let loss = LossSpec::default();
        let sizes: Vec<usize> = (0..3)
            .map(|_| {
                run_epoch(&mut state, &data, &model, &loss, &cfg, &prior, &mut rng)
                    .unwrap()
                    .ensemble_size
            })
            .collect();
        assert_eq!(sizes, vec![7, 9, 9]);
    }

    #[test]
    fn rejects_mismatched_data() {
        let (_, model) = toy();
        let data = Dataset::new(vec![0.0; 4], vec![0.0; 2], 2, 1).unwrap();
        let prior = model.xavier_prior();
        let mut rng = SeededRng::new(0);
        let mut state = init_ensemble(&prior, 3, false, &mut rng).unwrap();
        let cfg = EkiConfig {
            ensemble_size: 3,
            ..Default::default()
        };
        let err = run_epoch(&mut state, &data, &model, &LossSpec::default(), &cfg, &prior, &mut rng);
        assert!(matches!(err, Err(EkiError::Config(_))));
    }
}
