//! Browser bindings: three small experiments that return JSON for the page
//! in `www/` to draw.

use eki_learn::eki::{eki_step, init_ensemble, Batch, EkiConfig, OnlineRnn};
use eki_learn::graph::{
    affinity_matrix, fiedler_classifier, graph_laplacian, prior_from_laplacian, ssl_eki, LabeledSubset,
};
use eki_learn::losses::LossSpec;
use eki_learn::models::{Activation, FeedForward, ForwardModel, ModelSpec, OutputMap, RnnMode, RnnModel, RnnSpec};
use eki_learn::numerics::{Matrix, SeededRng};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct CurveFit {
    pub grid_x: Vec<f64>,
    pub grid_y: Vec<f64>,
    /// Training loss of the mean particle after each step.
    pub loss: Vec<f64>,
}

/// Fits a `1-hidden-1` tanh network to the given points with full-batch EKI.
pub fn fit_curve(
    xs: &[f64],
    ys: &[f64],
    hidden: usize,
    ensemble: usize,
    steps: usize,
    seed: u64,
) -> Result<CurveFit, String> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err("need matching, non-empty x and y".into());
    }
    let model = FeedForward::new(ModelSpec::dense(&[1, hidden.max(1), 1], Activation::Tanh, OutputMap::Identity))
        .map_err(|e| e.to_string())?;
    let prior = model.xavier_prior();
    let mut rng = SeededRng::new(seed);
    let mut state = init_ensemble(&prior, ensemble, false, &mut rng).map_err(|e| e.to_string())?;
    let cfg = EkiConfig {
        ensemble_size: ensemble,
        ..EkiConfig::default()
    };
    let loss = LossSpec::default();
    let batch = Batch::new(xs, ys, xs.len());
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        eki_step(&mut state, &model, &loss, &batch, &cfg, &prior, &mut rng).map_err(|e| e.to_string())?;
        let pred = model.forward_batch(&state.mean(), xs, xs.len()).map_err(|e| e.to_string())?;
        trace.push(loss.value(&pred, ys).map_err(|e| e.to_string())? / xs.len() as f64);
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let grid_x: Vec<f64> = (0..=100).map(|i| lo + (hi - lo) * i as f64 / 100.0).collect();
    let grid_y = model
        .forward_batch(&state.mean(), &grid_x, grid_x.len())
        .map_err(|e| e.to_string())?;
    Ok(CurveFit {
        grid_x,
        grid_y,
        loss: trace,
    })
}

#[derive(Debug, Serialize)]
pub struct GraphResult {
    pub points: Vec<[f64; 2]>,
    pub truth: Vec<f64>,
    pub labeled: Vec<usize>,
    pub eki: Vec<f64>,
    pub fiedler: Vec<f64>,
    pub eki_accuracy: f64,
    pub fiedler_accuracy: f64,
}

// graph settings for the cluster demo
const SIGMA: f64 = 0.5;
const TAU: f64 = 0.0;
const ALPHA: f64 = 2.0;
const STEPS: usize = 50;

fn agreement(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

/// Two Gaussian clusters in the plane; labels a few points per cluster and
/// propagates them over the similarity graph.
pub fn graph_ssl(per_cluster: usize, spread: f64, labeled: usize, seed: u64) -> Result<GraphResult, String> {
    if per_cluster < 2 || labeled == 0 || labeled > per_cluster {
        return Err("need at least two points per cluster and 1..=per_cluster labels".into());
    }
    let mut rng = SeededRng::new(seed);
    let mut points = Vec::with_capacity(2 * per_cluster);
    let mut truth = Vec::with_capacity(2 * per_cluster);
    for (cx, label) in [(-1.0, 1.0), (1.0, -1.0)] {
        for _ in 0..per_cluster {
            points.push([cx + spread * rng.standard_normal(), spread * rng.standard_normal()]);
            truth.push(label);
        }
    }
    let flat: Vec<f64> = points.iter().flatten().copied().collect();
    let features = Matrix::new(points.len(), 2, flat).map_err(|e| e.to_string())?;
    let lap = graph_laplacian(&affinity_matrix(&features, SIGMA).map_err(|e| e.to_string())?);
    let subset = LabeledSubset::draw(&truth, labeled, labeled, &mut rng).map_err(|e| e.to_string())?;
    let fiedler = fiedler_classifier(&lap, Some(&subset)).map_err(|e| e.to_string())?;
    let prior = prior_from_laplacian(&lap, TAU, ALPHA).map_err(|e| e.to_string())?;
    let cfg = EkiConfig {
        ensemble_size: 200,
        ..EkiConfig::default()
    };
    let fit = ssl_eki(&prior, &subset, &cfg, STEPS, &mut rng).map_err(|e| e.to_string())?;
    Ok(GraphResult {
        eki_accuracy: agreement(&fit.labels, &truth),
        fiedler_accuracy: agreement(&fiedler, &truth),
        points,
        truth,
        labeled: subset.indices,
        eki: fit.labels,
        fiedler,
    })
}

#[derive(Debug, Serialize)]
pub struct OnlineTrace {
    pub truth: Vec<f64>,
    /// One-step predictions made before each update.
    pub predictions: Vec<f64>,
    pub squared_error: Vec<f64>,
}

/// One online pass of a recurrent network over `sin(2πt/period)`.
pub fn online_sine(points: usize, period: f64, hidden: usize, ensemble: usize, seed: u64) -> Result<OnlineTrace, String> {
    if points < 3 || !(period > 0.0) {
        return Err("need at least three points and a positive period".into());
    }
    let truth: Vec<f64> = (0..points)
        .map(|t| (2.0 * std::f64::consts::PI * t as f64 / period).sin())
        .collect();
    let model = RnnModel::new(RnnSpec {
        input_dim: 1,
        hidden_dim: hidden.max(1),
        layers: 1,
        output_dim: 1,
        activation: Activation::Tanh,
        output_map: OutputMap::Identity,
        mode: RnnMode::default(),
        seq_len: 1,
    })
    .map_err(|e| e.to_string())?;
    let prior = model.xavier_prior();
    let mut rng = SeededRng::new(seed);
    let mut state = init_ensemble(&prior, ensemble, false, &mut rng).map_err(|e| e.to_string())?;
    let cfg = EkiConfig {
        ensemble_size: ensemble,
        ..EkiConfig::default()
    };
    let mut online = OnlineRnn::new(model);
    let mut predictions = Vec::with_capacity(points - 1);
    let mut squared_error = Vec::with_capacity(points - 1);
    for t in 0..points - 1 {
        let out = online
            .step(
                &mut state,
                &LossSpec::default(),
                &truth[t..t + 1],
                &truth[t + 1..t + 2],
                &cfg,
                &prior,
                &mut rng,
            )
            .map_err(|e| e.to_string())?;
        squared_error.push((out.prediction[0] - truth[t + 1]).powi(2));
        predictions.push(out.prediction[0]);
    }
    Ok(OnlineTrace {
        truth,
        predictions,
        squared_error,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = fitCurve)]
pub fn fit_curve_js(
    xs: Vec<f64>,
    ys: Vec<f64>,
    hidden: usize,
    ensemble: usize,
    steps: usize,
    seed: u32,
) -> Result<String, JsValue> {
    to_js(fit_curve(&xs, &ys, hidden, ensemble, steps, seed.into()))
}

#[wasm_bindgen(js_name = graphSsl)]
pub fn graph_ssl_js(per_cluster: usize, spread: f64, labeled: usize, seed: u32) -> Result<String, JsValue> {
    to_js(graph_ssl(per_cluster, spread, labeled, seed.into()))
}

#[wasm_bindgen(js_name = onlineSine)]
pub fn online_sine_js(points: usize, period: f64, hidden: usize, ensemble: usize, seed: u32) -> Result<String, JsValue> {
    to_js(online_sine(points, period, hidden, ensemble, seed.into()))
}
