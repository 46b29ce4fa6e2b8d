//! Graph-Laplacian semi-supervised classification.
//!
//! Nodes carry feature vectors; a Gaussian kernel defines edge weights, the
//! Laplacian defines the prior `N(0, (L + τ²I)^{−α})` over node functions,
//! and EKI fits the labeled nodes. Predictions are `sign(u_j)`.

use log::warn;
use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eki::{eki_step, init_ensemble, Batch, EkiConfig, EkiError, EnsembleState};
use crate::losses::{Gamma, LossSpec};
use crate::models::{ForwardModel, ModelError};
use crate::numerics::{sym_eig, Matrix, NumericsError, SeededRng, SymEig};
use crate::prior::{CovarianceFactor, GaussianPrior};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("bandwidth must be positive")]
    BadBandwidth,
    #[error("invalid prior parameters: tau = {tau}, alpha = {alpha}")]
    BadPrior { tau: f64, alpha: f64 },
    #[error("graph is disconnected ({0} zero eigenvalues)")]
    Disconnected(usize),
    #[error("edge weights must be nonnegative")]
    NegativeWeight,
    #[error("labeled subset: {0}")]
    Labels(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Eki(#[from] EkiError),
}

/// Relative tolerance under which a Laplacian eigenvalue counts as zero.
pub const ZERO_EIGEN_TOL: f64 = 1e-9;

/// Symmetric nonnegative weights with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    weights: Matrix,
}

impl AffinityGraph {
    pub fn from_weights(weights: Matrix) -> Result<Self, GraphError> {
        if !weights.is_square() {
            return Err(NumericsError::NotSquare {
                rows: weights.rows(),
                cols: weights.cols(),
            }
            .into());
        }
        let asym = weights.asymmetry();
        if asym > 1e-12 * weights.max_abs().max(1.0) {
            return Err(NumericsError::NotSymmetric(asym).into());
        }
        let mut weights = weights;
        for i in 0..weights.rows() {
            weights[(i, i)] = 0.0;
        }
        if weights.as_slice().iter().any(|w| *w < 0.0) {
            return Err(GraphError::NegativeWeight);
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `W_ij = exp(−‖x_i − x_j‖² / (2σ²))` for `i ≠ j`; rows of `features` are nodes.
pub fn affinity_matrix(features: &Matrix, sigma: f64) -> Result<AffinityGraph, GraphError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(GraphError::BadBandwidth);
    }
    let n = features.rows();
    let denom = 2.0 * sigma * sigma;
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = features
                .row(i)
                .iter()
                .zip(features.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let v = (-d2 / denom).exp();
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    Ok(AffinityGraph { weights: w })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianKind {
    /// `L = D − W`.
    #[default]
    Unnormalized,
    /// `I − D^{−1/2} W D^{−1/2}`; isolated nodes get a zero row.
    SymmetricNormalized,
}

pub fn graph_laplacian(g: &AffinityGraph) -> Matrix {
    laplacian_of_kind(g, LaplacianKind::Unnormalized)
}

pub fn laplacian_of_kind(g: &AffinityGraph, kind: LaplacianKind) -> Matrix {
    let n = g.len();
    let w = &g.weights;
    let degree: Vec<f64> = w.row_iter().map(|r| r.iter().sum()).collect();
    let mut l = Matrix::zeros(n, n);
    match kind {
        LaplacianKind::Unnormalized => {
            for i in 0..n {
                for j in 0..n {
                    l[(i, j)] = if i == j { degree[i] } else { -w[(i, j)] };
                }
            }
        }
        LaplacianKind::SymmetricNormalized => {
            let s: Vec<f64> = degree.iter().map(|d| if *d > 0.0 { d.sqrt().recip() } else { 0.0 }).collect();
            for i in 0..n {
                for j in 0..n {
                    let off = s[i] * w[(i, j)] * s[j];
                    l[(i, j)] = if i == j { f64::from(u8::from(degree[i] > 0.0)) - off } else { -off };
                }
            }
        }
    }
    l
}

fn zero_mode_count(eig: &SymEig) -> usize {
    let scale = eig.values.last().map_or(1.0, |v| v.abs().max(1.0));
    eig.values.iter().take_while(|v| **v <= ZERO_EIGEN_TOL * scale).count()
}

/// The node-function prior `N(0, (L + τ²I)^{−α})`.
///
/// With `τ = 0` the covariance lives on the orthogonal complement of the
/// Laplacian null space.
#[derive(Debug, Clone)]
pub struct GraphPrior {
    pub tau: f64,
    pub alpha: f64,
    eig: SymEig,
    excluded: usize,
    factor: Matrix,
}

impl GraphPrior {
    pub fn eig(&self) -> &SymEig {
        &self.eig
    }

    /// Number of eigenmodes left out of the covariance.
    pub fn excluded_modes(&self) -> usize {
        self.excluded
    }

    /// `N × r` factor with columns `v_i (λ_i + τ²)^{−α/2}`.
    pub fn factor(&self) -> &Matrix {
        &self.factor
    }

    pub fn covariance(&self) -> Matrix {
        self.factor.matmul_t(&self.factor).expect("factor shapes agree")
    }

    pub fn gaussian(&self) -> GaussianPrior {
        GaussianPrior::new(vec![0.0; self.factor.rows()], CovarianceFactor::Dense(self.factor.clone()))
    }
}

pub fn prior_from_laplacian(l: &Matrix, tau: f64, alpha: f64) -> Result<GraphPrior, GraphError> {
    if !(tau >= 0.0 && tau.is_finite() && alpha > 0.0 && alpha.is_finite()) {
        return Err(GraphError::BadPrior { tau, alpha });
    }
    let eig = sym_eig(l)?;
    let excluded = if tau == 0.0 { zero_mode_count(&eig) } else { 0 };
    if tau == 0.0 && excluded > 1 {
        warn!("graph has {excluded} connected components; excluding all zero modes from the prior");
    }
    let n = l.rows();
    let r = n - excluded;
    let mut factor = Matrix::zeros(n, r);
    for (c, i) in (excluded..n).enumerate() {
        let scale = (eig.values[i] + tau * tau).powf(-alpha / 2.0);
        for row in 0..n {
            factor[(row, c)] = eig.vectors[(row, i)] * scale;
        }
    }
    Ok(GraphPrior {
        tau,
        alpha,
        eig,
        excluded,
        factor,
    })
}

/// Observed node indices `Z′` with labels `±1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSubset {
    pub indices: Vec<usize>,
    pub labels: Vec<f64>,
}

impl LabeledSubset {
    pub fn new(indices: Vec<usize>, labels: Vec<f64>) -> Result<Self, GraphError> {
        if indices.is_empty() || indices.len() != labels.len() {
            return Err(GraphError::Labels("need one label per index and at least one index".into()));
        }
        if labels.iter().any(|l| l.abs() != 1.0) {
            return Err(GraphError::Labels("labels must be ±1".into()));
        }
        Ok(Self { indices, labels })
    }

    /// Draws `positives` nodes labeled `+1` and `negatives` labeled `−1` from
    /// `truth`, uniformly without replacement. Indices come out sorted.
    pub fn draw(truth: &[f64], positives: usize, negatives: usize, rng: &mut SeededRng) -> Result<Self, GraphError> {
        let mut pick = |sign: f64, k: usize| -> Result<Vec<usize>, GraphError> {
            let pool: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == sign).collect();
            if pool.len() < k {
                return Err(GraphError::Labels(format!("only {} nodes labeled {sign}", pool.len())));
            }
            Ok(pool.choose_multiple(rng, k).copied().collect())
        };
        let mut indices = pick(1.0, positives)?;
        indices.extend(pick(-1.0, negatives)?);
        indices.sort_unstable();
        let labels = indices.iter().map(|&i| truth[i]).collect();
        Self::new(indices, labels)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn check(&self, n: usize) -> Result<(), GraphError> {
        match self.indices.iter().find(|&&i| i >= n) {
            Some(i) => Err(GraphError::Labels(format!("index {i} outside 0..{n}"))),
            None => Ok(()),
        }
    }
}

/// `sign(x)` with zero mapped to `+1`.
pub fn sign_label(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Thresholds the eigenvector of the smallest nonzero Laplacian eigenvalue.
///
/// Zero entries get `+1`. When labels are supplied the global sign is chosen
/// to agree with as many of them as possible; otherwise the first node is `+1`.
pub fn fiedler_classifier(l: &Matrix, labeled: Option<&LabeledSubset>) -> Result<Vec<f64>, GraphError> {
    let eig = sym_eig(l)?;
    let zeros = zero_mode_count(&eig);
    if zeros != 1 || l.rows() < 2 {
        return Err(GraphError::Disconnected(zeros));
    }
    let v = eig.vector(1);
    let labels: Vec<f64> = v.iter().map(|x| sign_label(*x)).collect();
    let flipped: Vec<f64> = v.iter().map(|x| sign_label(-*x)).collect();
    let flip = match labeled {
        Some(s) => {
            s.check(l.rows())?;
            let agree = |lab: &[f64]| s.indices.iter().zip(&s.labels).filter(|(i, y)| lab[**i] == **y).count();
            agree(&flipped) > agree(&labels)
        }
        None => labels[0] < 0.0,
    };
    Ok(if flip { flipped } else { labels })
}

/// Squared-error gradient on the labeled coordinates:
/// `precision·(u_j − y_j)` for `j ∈ Z′`, zero elsewhere.
pub fn ssl_loss_grads(u: &[f64], subset: &LabeledSubset, precision: f64) -> Result<Vec<f64>, GraphError> {
    subset.check(u.len())?;
    let mut g = vec![0.0; u.len()];
    for (&i, y) in subset.indices.iter().zip(&subset.labels) {
        g[i] = precision * (u[i] - y);
    }
    Ok(g)
}

/// Forward map observing a node function on the labeled nodes.
#[derive(Debug, Clone)]
pub struct ObservedNodes {
    nodes: usize,
    indices: Vec<usize>,
}

impl ObservedNodes {
    pub fn new(nodes: usize, subset: &LabeledSubset) -> Result<Self, GraphError> {
        subset.check(nodes)?;
        Ok(Self {
            nodes,
            indices: subset.indices.clone(),
        })
    }
}

impl ForwardModel for ObservedNodes {
    fn param_count(&self) -> usize {
        self.nodes
    }

    fn input_dim(&self) -> usize {
        0
    }

    fn output_dim(&self) -> usize {
        self.indices.len()
    }

    fn forward_batch(&self, params: &[f64], _inputs: &[f64], batch: usize) -> Result<Vec<f64>, ModelError> {
        if params.len() != self.nodes {
            return Err(ModelError::DimensionMismatch {
                context: "node function",
                expected: self.nodes,
                found: params.len(),
            });
        }
        let obs = self.indices.iter().map(|&i| params[i]);
        Ok(std::iter::repeat_n(obs, batch).flatten().collect())
    }
}

/// Outcome of fitting a node function with EKI.
#[derive(Debug, Clone)]
pub struct SslFit {
    pub mean: Vec<f64>,
    pub labels: Vec<f64>,
    pub state: EnsembleState,
}

/// Squared-error loss with noise variance `|Z′|`, the scaling under which the
/// data term is the average over labeled nodes.
pub fn ssl_loss(subset: &LabeledSubset) -> LossSpec {
    LossSpec::SquaredError {
        gamma: Gamma::Scalar(subset.len() as f64),
    }
}

/// Runs `steps` full-batch EKI updates from a prior ensemble and predicts
/// `sign(ū_j)` on every node.
pub fn ssl_eki(
    prior: &GraphPrior,
    subset: &LabeledSubset,
    cfg: &EkiConfig,
    steps: usize,
    rng: &mut SeededRng,
) -> Result<SslFit, GraphError> {
    let gaussian = prior.gaussian();
    let model = ObservedNodes::new(gaussian.dim(), subset)?;
    let loss = ssl_loss(subset);
    let mut state = init_ensemble(&gaussian, cfg.ensemble_size, false, rng)?;
    let batch = Batch::new(&[], &subset.labels, 1);
    for _ in 0..steps {
        eki_step(&mut state, &model, &loss, &batch, cfg, &gaussian, rng)?;
    }
    let mean = state.mean();
    let labels = mean.iter().map(|x| sign_label(*x)).collect();
    Ok(SslFit { mean, labels, state })
}
