use std::path::Path;
use std::time::Instant;

use log::info;
use rand::seq::IndexedRandom;

use crate::data::{
    load_mnist, normalize_images, normalize_minmax, read_series_file, read_voting_file, resolve_data_path,
    verify_sha256, DataError, Dataset, ImageDataset, VOTING_ISSUES,
};
use crate::eki::{eki_step, init_ensemble, run_epoch, Batch, EnsembleState, OnlineRnn};
use crate::graph::{
    affinity_matrix, fiedler_classifier, laplacian_of_kind, prior_from_laplacian, sign_label, ssl_loss, LabeledSubset,
    ObservedNodes,
};
use crate::losses::LossSpec;
use crate::models::{FeedForward, ForwardModel, RnnModel};
use crate::numerics::{Matrix, SeededRng};

use super::config::{ExperimentConfig, OnlineTask, SeriesSource, SsdTask, SupervisedData, SupervisedTask, TaskConfig};
use super::metrics::{accuracy, argmax, test_error, MetricsRecord};
use super::HarnessError;

/// Result of a run: every emitted record plus the mean-particle parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub records: Vec<MetricsRecord>,
    pub params: Vec<f64>,
    /// Fiedler-vector accuracy on the semi-supervised task.
    pub baseline: Option<f64>,
}

struct Recorder<'a> {
    start: Instant,
    timing: bool,
    records: Vec<MetricsRecord>,
    sink: &'a mut dyn FnMut(&MetricsRecord) -> Result<(), HarnessError>,
}

impl Recorder<'_> {
    fn push(&mut self, epoch: u64, train: f64, test: f64, ensemble_size: usize) -> Result<(), HarnessError> {
        let record = MetricsRecord {
            epoch,
            train_metric: train,
            test_metric: test,
            wall_time: if self.timing {
                self.start.elapsed().as_secs_f64()
            } else {
                0.0
            },
            ensemble_size,
        };
        record.validate()?;
        info!(
            "epoch {epoch}: train {train:.6} test {test:.6} J={ensemble_size} ({:.1}s)",
            record.wall_time
        );
        (self.sink)(&record)?;
        self.records.push(record);
        Ok(())
    }
}

/// Runs the configured experiment. Relative data paths resolve against
/// `$EKI_DATA_DIR` or `base`; `sink` sees each record as soon as it exists.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    base: &Path,
    sink: &mut dyn FnMut(&MetricsRecord) -> Result<(), HarnessError>,
) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    let mut rec = Recorder {
        start: Instant::now(),
        timing: cfg.timing,
        records: Vec::new(),
        sink,
    };
    let mut rng = SeededRng::new(cfg.seed);
    let (params, baseline) = match &cfg.task {
        TaskConfig::Supervised(t) => (supervised(cfg, t, base, &mut rng, &mut rec)?, None),
        TaskConfig::SemiSupervised(t) => {
            let (p, b) = semi_supervised(cfg, t, base, &mut rng, &mut rec)?;
            (p, Some(b))
        }
        TaskConfig::Online(t) => (online(cfg, t, base, &mut rng, &mut rec)?, None),
    };
    Ok(RunSummary {
        records: rec.records,
        params,
        baseline,
    })
}

fn checked_path(path: &Path, base: &Path, sha256: Option<&str>) -> Result<std::path::PathBuf, HarnessError> {
    let p = resolve_data_path(path, base);
    if !p.is_file() {
        return Err(DataError::Invalid(format!("data file {} does not exist", p.display())).into());
    }
    if let Some(expected) = sha256 {
        verify_sha256(&p, expected)?;
    }
    Ok(p)
}

fn seeded_subset(data: ImageDataset, n: Option<usize>, rng: &mut SeededRng) -> Result<ImageDataset, HarnessError> {
    match n {
        None => Ok(data),
        Some(k) if k > data.len() => Err(HarnessError::Config(format!(
            "subset of {k} requested from {} images",
            data.len()
        ))),
        Some(k) => {
            let all: Vec<usize> = (0..data.len()).collect();
            let mut picked: Vec<usize> = all.choose_multiple(rng, k).copied().collect();
            picked.sort_unstable();
            Ok(data.subset(&picked))
        }
    }
}

fn inline_dataset(inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Dataset, HarnessError> {
    let (Some(x0), Some(y0)) = (inputs.first(), targets.first()) else {
        return Err(HarnessError::Config("inline data needs at least one pair".into()));
    };
    if inputs.iter().any(|x| x.len() != x0.len()) || targets.iter().any(|y| y.len() != y0.len()) {
        return Err(HarnessError::Config("inline rows differ in length".into()));
    }
    Ok(Dataset::new(
        inputs.concat(),
        targets.concat(),
        x0.len(),
        y0.len(),
    )?)
}

fn load_supervised(data: &SupervisedData, base: &Path, rng: &mut SeededRng) -> Result<(Dataset, Dataset), HarnessError> {
    match data {
        SupervisedData::Mnist {
            train_images,
            train_labels,
            test_images,
            test_labels,
            train_subset,
            test_subset,
            sha256,
        } => {
            let path = |p: &Path| {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                checked_path(p, base, sha256.get(name).map(String::as_str))
            };
            let train = load_mnist(&path(train_images)?, &path(train_labels)?)?;
            let test = load_mnist(&path(test_images)?, &path(test_labels)?)?;
            let train = seeded_subset(train, *train_subset, rng)?;
            let test = seeded_subset(test, *test_subset, rng)?;
            let (train, test, _) = normalize_images(&train, &test)?;
            Ok((train.to_dataset(), test.to_dataset()))
        }
        SupervisedData::Inline {
            inputs,
            targets,
            test_inputs,
            test_targets,
        } => {
            let train = inline_dataset(inputs, targets)?;
            let test = if test_inputs.is_empty() && test_targets.is_empty() {
                train.clone()
            } else {
                inline_dataset(test_inputs, test_targets)?
            };
            Ok((train, test))
        }
    }
}

/// Accuracy for cross-entropy runs, mean squared error otherwise.
fn evaluate<M: ForwardModel>(model: &M, loss: &LossSpec, params: &[f64], data: &Dataset) -> Result<f64, HarnessError> {
    let pred = model.forward_batch(params, &data.inputs, data.len())?;
    match loss {
        LossSpec::CrossEntropy { .. } => {
            let d = data.target_dim;
            let p: Vec<usize> = pred.chunks_exact(d).map(argmax).collect();
            let t: Vec<usize> = data.targets.chunks_exact(d).map(argmax).collect();
            accuracy(&p, &t)
        }
        LossSpec::SquaredError { .. } => test_error(&pred, &data.targets, data.target_dim),
    }
}

fn supervised(
    cfg: &ExperimentConfig,
    task: &SupervisedTask,
    base: &Path,
    rng: &mut SeededRng,
    rec: &mut Recorder<'_>,
) -> Result<Vec<f64>, HarnessError> {
    let (train, test) = load_supervised(&task.data, base, rng)?;
    let model = FeedForward::new(task.model.clone())?;
    if train.input_dim != model.input_dim() || train.target_dim != model.output_dim() {
        return Err(HarnessError::Config(format!(
            "data is {}→{} but the model is {}→{}",
            train.input_dim,
            train.target_dim,
            model.input_dim(),
            model.output_dim()
        )));
    }
    info!(
        "supervised: {} train / {} test samples, {} parameters",
        train.len(),
        test.len(),
        model.param_count()
    );
    let prior = model.xavier_prior();
    let mut state = init_ensemble(&prior, cfg.eki.ensemble_size, cfg.eki.momentum_mode(), rng)?;
    for epoch in 1..=cfg.epochs {
        // metrics describe the ensemble the epoch produced, before regeneration
        let stats = run_epoch(&mut state, &train, &model, &cfg.loss, &cfg.eki, &prior, rng)?;
        let mean = state.mean();
        let tr = evaluate(&model, &cfg.loss, &mean, &train)?;
        let te = evaluate(&model, &cfg.loss, &mean, &test)?;
        rec.push(epoch as u64, tr, te, stats.ensemble_size)?;
    }
    Ok(state.mean())
}

fn agreement(pred: &[f64], truth: &[f64]) -> Result<f64, HarnessError> {
    let p: Vec<usize> = pred.iter().map(|v| usize::from(*v > 0.0)).collect();
    let t: Vec<usize> = truth.iter().map(|v| usize::from(*v > 0.0)).collect();
    accuracy(&p, &t)
}

fn semi_supervised(
    cfg: &ExperimentConfig,
    task: &SsdTask,
    base: &Path,
    rng: &mut SeededRng,
    rec: &mut Recorder<'_>,
) -> Result<(Vec<f64>, f64), HarnessError> {
    let path = checked_path(&task.records, base, task.sha256.as_deref())?;
    let votes = read_voting_file(&path)?;
    let features = Matrix::new(votes.len(), VOTING_ISSUES, votes.features.clone())?;
    let graph = affinity_matrix(&features, task.sigma)?;
    let lap = laplacian_of_kind(&graph, task.laplacian);
    let subset = LabeledSubset::draw(&votes.labels, task.positives, task.negatives, rng)?;

    let baseline = agreement(&fiedler_classifier(&lap, Some(&subset))?, &votes.labels)?;
    info!("Fiedler baseline accuracy {baseline:.4}");

    let prior = prior_from_laplacian(&lap, task.tau, task.alpha)?.gaussian();
    let model = ObservedNodes::new(votes.len(), &subset)?;
    let loss = ssl_loss(&subset);
    let mut state = init_ensemble(&prior, cfg.eki.ensemble_size, false, rng)?;
    let batch = Batch::new(&[], &subset.labels, 1);
    for it in 1..=cfg.epochs {
        eki_step(&mut state, &model, &loss, &batch, &cfg.eki, &prior, rng)?;
        let labels: Vec<f64> = state.mean().iter().map(|x| sign_label(*x)).collect();
        let observed: Vec<f64> = subset.indices.iter().map(|&i| labels[i]).collect();
        let tr = agreement(&observed, &subset.labels)?;
        let te = agreement(&labels, &votes.labels)?;
        rec.push(it as u64, tr, te, state.size())?;
    }
    Ok((state.mean(), baseline))
}

fn load_series(source: &SeriesSource, base: &Path) -> Result<Vec<f64>, HarnessError> {
    match source {
        SeriesSource::File { path, sha256 } => Ok(read_series_file(&checked_path(path, base, sha256.as_deref())?)?),
        SeriesSource::Sine { points, period } => {
            if !(*period > 0.0) {
                return Err(HarnessError::Config("sine period must be positive".into()));
            }
            Ok((0..*points)
                .map(|t| (2.0 * std::f64::consts::PI * t as f64 / period).sin())
                .collect())
        }
    }
}

/// Mean squared one-step error of `params` on `values[from..]`, warming the
/// hidden state up on everything before.
fn held_out_mse(online: &OnlineRnn, params: &[f64], values: &[f64], from: usize) -> f64 {
    let mut runner = OnlineRnn::new(online.model().clone());
    let mut total = 0.0;
    for t in 0..values.len() - 1 {
        let out = runner.advance(params, &values[t..t + 1]);
        if t + 1 >= from {
            total += (out[0] - values[t + 1]).powi(2);
        }
    }
    total / (values.len() - from) as f64
}

fn online(
    cfg: &ExperimentConfig,
    task: &OnlineTask,
    base: &Path,
    rng: &mut SeededRng,
    rec: &mut Recorder<'_>,
) -> Result<Vec<f64>, HarnessError> {
    let raw = load_series(&task.series, base)?;
    let boundary = ((raw.len() as f64 * task.train_fraction).round() as usize).min(raw.len());
    if boundary < 2 {
        return Err(HarnessError::Config("online pass needs at least two training values".into()));
    }
    let (scale, _) = normalize_minmax(&raw[..boundary])?;
    let values: Vec<f64> = raw.iter().map(|x| scale.apply(*x)).collect();
    let has_test = raw.len() - boundary >= 1;

    let spec = &task.model;
    if spec.input_dim != 1 || spec.output_dim != 1 {
        return Err(HarnessError::Config("online series model must be 1→1".into()));
    }
    let model = RnnModel::new(spec.clone())?;
    let prior = model.xavier_prior();
    let mut state: EnsembleState = init_ensemble(&prior, cfg.eki.ensemble_size, cfg.eki.momentum_mode(), rng)?;
    let mut online = OnlineRnn::new(model);

    let steps = boundary - 1;
    let mut window = Vec::with_capacity(task.report_every);
    for t in 0..steps {
        let out = online.step(
            &mut state,
            &cfg.loss,
            &values[t..t + 1],
            &values[t + 1..t + 2],
            &cfg.eki,
            &prior,
            rng,
        )?;
        window.push((out.prediction[0] - values[t + 1]).powi(2));
        if window.len() == task.report_every || t + 1 == steps {
            let rolling = window.iter().sum::<f64>() / window.len() as f64;
            let test = if has_test {
                held_out_mse(&online, &state.mean(), &values, boundary)
            } else {
                rolling
            };
            rec.push(t as u64 + 1, rolling, test, state.size())?;
            window.clear();
        }
    }
    Ok(state.mean())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config() -> ExperimentConfig {
        let inputs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0]).collect();
        let targets: Vec<Vec<f64>> = inputs.iter().map(|x| vec![2.0 * x[0] - 0.5]).collect();
        let json = serde_json::json!({
            "version": 1,
            "seed": 11,
            "epochs": 1,
            "timing": false,
            "eki": {"batch_size": 10, "ensemble_size": 8},
            "task": {"supervised": {
                "data": {"kind": "inline", "inputs": inputs, "targets": targets},
                "model": {"input": [1, 1, 1], "layers": [{"kind": "affine_output", "outputs": 1}]}
            }}
        });
        ExperimentConfig::from_json(&json.to_string()).unwrap()
    }

    #[test]
    fn toy_supervised_run_records_one_epoch() {
        let cfg = toy_config();
        let mut seen = 0;
        let summary = run_experiment(&cfg, Path::new("."), &mut |_| {
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 1);
        assert_eq!(summary.records.len(), 1);
        assert_eq!(summary.records[0].epoch, 1);
        assert_eq!(summary.params.len(), 2);
    }

    #[test]
    fn runs_are_deterministic() {
        let mut cfg = toy_config();
        cfg.epochs = 3;
        let a = run_experiment(&cfg, Path::new("."), &mut |_| Ok(())).unwrap();
        let b = run_experiment(&cfg, Path::new("."), &mut |_| Ok(())).unwrap();
        assert_eq!(a, b);
        cfg.seed += 1;
        let c = run_experiment(&cfg, Path::new("."), &mut |_| Ok(())).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn online_sine_reports_every_window() {
        let json = r#"{
            "version": 1, "seed": 5, "timing": false,
            "eki": {"ensemble_size": 12},
            "task": {"online": {
                "series": {"kind": "sine", "points": 120, "period": 20},
                "model": {"input_dim": 1, "hidden_dim": 4, "output_dim": 1},
                "report_every": 25
            }}
        }"#;
        let cfg = ExperimentConfig::from_json(json).unwrap();
        let s = run_experiment(&cfg, Path::new("."), &mut |_| Ok(())).unwrap();
        // 96 training values give 95 online steps
        let epochs: Vec<u64> = s.records.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![25, 50, 75, 95]);
    }

    #[test]
    fn missing_data_file_is_an_error() {
        let json = r#"{
            "version": 1, "seed": 1,
            "task": {"semi_supervised": {"records": "/nonexistent/votes.data"}}
        }"#;
        let cfg = ExperimentConfig::from_json(json).unwrap();
        assert!(run_experiment(&cfg, Path::new("."), &mut |_| Ok(())).is_err());
    }
}
