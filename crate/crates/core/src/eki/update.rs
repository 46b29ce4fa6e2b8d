use rayon::prelude::*;

use crate::losses::LossSpec;
use crate::models::{ForwardModel, ModelError};
use crate::numerics::{mean_rows, Matrix, SeededRng};
use crate::prior::GaussianPrior;

use super::{randomize_per_step, EkiConfig, EkiError, EnsembleState, Randomization};

/// A mini-batch: `len` inputs and targets, each stored row-major.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub inputs: &'a [f64],
    pub targets: &'a [f64],
    pub len: usize,
}

impl<'a> Batch<'a> {
    pub fn new(inputs: &'a [f64], targets: &'a [f64], len: usize) -> Self {
        Self { inputs, targets, len }
    }
}

/// Diagnostics of one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub h: f64,
    pub d_norm: f64,
    pub ensemble_size: usize,
}

/// `D_kj = ⟨G_k − Ḡ, grad_j⟩` for `J × M` row stacks of forward values and
/// loss gradients.
pub fn coupling_matrix(g_values: &Matrix, grads: &Matrix) -> Result<Matrix, EkiError> {
    if g_values.shape() != grads.shape() {
        return Err(EkiError::OutputMismatch {
            expected: g_values.rows() * g_values.cols(),
            found: grads.rows() * grads.cols(),
        });
    }
    Ok(center(g_values).matmul_t(grads)?)
}

/// `h₀ / (‖D‖_F + ε)`.
pub fn adaptive_step(d: &Matrix, h0: f64, epsilon: f64) -> f64 {
    h0 / (d.frobenius_norm() + epsilon)
}

fn center(m: &Matrix) -> Matrix {
    let mean = mean_rows(m);
    let mut out = m.clone();
    for row in out.as_mut_slice().chunks_mut(m.cols().max(1)) {
        for (v, c) in row.iter_mut().zip(&mean) {
            *v -= c;
        }
    }
    out
}

pub(crate) struct Drift {
    pub next: Matrix,
    pub info: StepInfo,
}

/// Evaluates the ensemble at `positions` and returns `positions − h·Dᵀ(U − Ū)`.
///
/// Because the columns of `D` sum to zero, subtracting the mean from `U` does
/// not change the update in exact arithmetic; it keeps the increment in the
/// span of the ensemble deviations.
pub(crate) fn drift<F>(
    positions: &Matrix,
    targets: &[f64],
    loss: &LossSpec,
    cfg: &EkiConfig,
    forward: F,
) -> Result<Drift, EkiError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, ModelError> + Sync,
{
    let j = positions.rows();
    let m = targets.len();
    let outputs: Vec<Result<Vec<f64>, ModelError>> = (0..j)
        .into_par_iter()
        .map(|k| forward(positions.row(k)))
        .collect();
    let mut g = Vec::with_capacity(j * m);
    for (particle, out) in outputs.into_iter().enumerate() {
        let out = out?;
        if out.len() != m {
            return Err(EkiError::OutputMismatch {
                expected: m,
                found: out.len(),
            });
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(EkiError::NonFinite {
                stage: "forward value",
                particle,
            });
        }
        g.extend(out);
    }
    let mut grads = vec![0.0; j * m];
    for (particle, (gk, dk)) in g.chunks(m.max(1)).zip(grads.chunks_mut(m.max(1))).enumerate() {
        loss.gradient_into(gk, targets, dk)?;
        if dk.iter().any(|v| !v.is_finite()) {
            return Err(EkiError::NonFinite {
                stage: "loss gradient",
                particle,
            });
        }
    }
    let g = Matrix::new(j, m, g)?;
    let grads = Matrix::new(j, m, grads)?;
    let gc = center(&g);
    let d = gc.matmul_t(&grads)?;
    let d_norm = d.frobenius_norm();
    let h = cfg.h0 / (d_norm + cfg.epsilon);

    let uc = center(positions);
    // Dᵀ·Uc = grads·(Gcᵀ·Uc), cheaper when the output is small.
    let inc = if 2 * m < j {
        grads.matmul(&gc.t_matmul(&uc)?)?
    } else {
        d.t_matmul(&uc)?
    };
    let mut next = positions.clone();
    for (u, du) in next.as_mut_slice().iter_mut().zip(inc.as_slice()) {
        *u -= h * du;
    }
    Ok(Drift {
        next,
        info: StepInfo {
            h,
            d_norm,
            ensemble_size: j,
        },
    })
}

fn batch_forward<'a, M: ForwardModel + ?Sized>(
    model: &'a M,
    batch: &'a Batch<'a>,
) -> impl Fn(&[f64]) -> Result<Vec<f64>, ModelError> + Sync + 'a {
    move |u| model.forward_batch(u, batch.inputs, batch.len)
}

fn check_batch<M: ForwardModel + ?Sized>(model: &M, batch: &Batch<'_>) -> Result<(), EkiError> {
    if batch.len == 0 {
        return Err(EkiError::Config("empty batch".into()));
    }
    if batch.targets.len() != batch.len * model.output_dim() {
        return Err(EkiError::OutputMismatch {
            expected: batch.len * model.output_dim(),
            found: batch.targets.len(),
        });
    }
    Ok(())
}

/// One plain EKI step on `batch`, followed by per-step noise if configured.
pub fn eki_step<M: ForwardModel + ?Sized>(
    state: &mut EnsembleState,
    model: &M,
    loss: &LossSpec,
    batch: &Batch<'_>,
    cfg: &EkiConfig,
    prior: &GaussianPrior,
    rng: &mut SeededRng,
) -> Result<StepInfo, EkiError> {
    check_batch(model, batch)?;
    eki_step_with(state, batch.targets, loss, cfg, prior, rng, batch_forward(model, batch))
}

pub(crate) fn eki_step_with<F>(
    state: &mut EnsembleState,
    targets: &[f64],
    loss: &LossSpec,
    cfg: &EkiConfig,
    prior: &GaussianPrior,
    rng: &mut SeededRng,
    forward: F,
) -> Result<StepInfo, EkiError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, ModelError> + Sync,
{
    if state.momenta.is_some() {
        return Err(EkiError::UnexpectedMomenta);
    }
    let drift = drift(&state.particles, targets, loss, cfg, forward)?;
    state.particles = drift.next;
    state.step += 1;
    if cfg.randomization == Randomization::PerStep {
        randomize_per_step(state, prior, drift.info.h, rng);
    }
    Ok(drift.info)
}

/// One momentum step:
/// `u' = v − h D(v) v`, `v' = u' + λ(u' − u)`, with `D` and `h` taken at `v`.
/// Per-step noise is applied to `v'`.
pub fn meki_step<M: ForwardModel + ?Sized>(
    state: &mut EnsembleState,
    model: &M,
    loss: &LossSpec,
    batch: &Batch<'_>,
    cfg: &EkiConfig,
    prior: &GaussianPrior,
    rng: &mut SeededRng,
) -> Result<StepInfo, EkiError> {
    check_batch(model, batch)?;
    meki_step_with(state, batch.targets, loss, cfg, prior, rng, batch_forward(model, batch))
}

pub(crate) fn meki_step_with<F>(
    state: &mut EnsembleState,
    targets: &[f64],
    loss: &LossSpec,
    cfg: &EkiConfig,
    prior: &GaussianPrior,
    rng: &mut SeededRng,
    forward: F,
) -> Result<StepInfo, EkiError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, ModelError> + Sync,
{
    let v = state.momenta.as_ref().ok_or(EkiError::MissingMomenta)?;
    let drift = drift(v, targets, loss, cfg, forward)?;
    let u_next = drift.next;
    let lambda = cfg.momentum;
    let v_next = if lambda == 0.0 {
        u_next.clone()
    } else {
        let mut v_next = u_next.clone();
        for (vn, u_old) in v_next.as_mut_slice().iter_mut().zip(state.particles.as_slice()) {
            *vn += lambda * (*vn - u_old);
        }
        v_next
    };
    state.particles = u_next;
    state.momenta = Some(v_next);
    state.step += 1;
    if cfg.randomization == Randomization::PerStep {
        randomize_per_step(state, prior, drift.info.h, rng);
    }
    Ok(drift.info)
}

/// Dispatches to [`meki_step`] or [`eki_step`] depending on whether the
/// ensemble carries momenta.
pub fn step<M: ForwardModel + ?Sized>(
    state: &mut EnsembleState,
    model: &M,
    loss: &LossSpec,
    batch: &Batch<'_>,
    cfg: &EkiConfig,
    prior: &GaussianPrior,
    rng: &mut SeededRng,
) -> Result<StepInfo, EkiError> {
    if state.momenta.is_some() {
        meki_step(state, model, loss, batch, cfg, prior, rng)
    } else {
        eki_step(state, model, loss, batch, cfg, prior, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::Gamma;
    use crate::models::LinearMap;

    fn scalar_state(values: &[f64], momentum: bool) -> EnsembleState {
        let rows: Vec<[f64; 1]> = values.iter().map(|v| [*v]).collect();
        EnsembleState::from_particles(Matrix::from_rows(&rows).unwrap(), momentum).unwrap()
    }

    fn identity_1d() -> LinearMap {
        LinearMap::new(Matrix::identity(1))
    }

    #[test]
    fn coupling_examples() {
        let g = Matrix::from_rows(&[[1.0], [3.0]]).unwrap();
        let d = coupling_matrix(&g, &g).unwrap();
        assert_eq!(d, Matrix::from_rows(&[[-1.0, -3.0], [1.0, 3.0]]).unwrap());
        let flat = Matrix::from_rows(&[[2.0, 1.0], [2.0, 1.0], [2.0, 1.0]]).unwrap();
        let grads = Matrix::from_rows(&[[1.0, 0.0], [5.0, 2.0], [-1.0, 1.0]]).unwrap();
        assert_eq!(coupling_matrix(&flat, &grads).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn adaptive_step_examples() {
        assert_eq!(adaptive_step(&Matrix::zeros(3, 3), 2.0, 0.5), 4.0);
        let d = Matrix::from_rows(&[[1.5, 0.0], [0.0, 0.0]]).unwrap();
        assert_eq!(adaptive_step(&d, 2.0, 0.5), 1.0);
        let mut last = f64::INFINITY;
        for s in [0.1, 1.0, 10.0, 1e3, 1e9] {
            let h = adaptive_step(&Matrix::identity(2).scale(s), 2.0, 0.5);
            assert!(h < last && h > 0.0);
            last = h;
        }
    }

    #[test]
    fn hand_evaluated_step() {
        let mut s = scalar_state(&[1.0, -1.0], false);
        let cfg = EkiConfig::default();
        let prior = GaussianPrior::isotropic(1, 1.0);
        let info = eki_step(
            &mut s,
            &identity_1d(),
            &LossSpec::default(),
            &Batch::new(&[], &[0.0], 1),
            &cfg,
            &prior,
            &mut SeededRng::new(0),
        )
        .unwrap();
        assert_eq!(info.d_norm, 2.0);
        assert!((info.h - 0.8).abs() < 1e-15);
        assert!((s.particle(0)[0] + 0.6).abs() < 1e-15);
        assert!((s.particle(1)[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn hand_evaluated_momentum_step() {
        let mut s = scalar_state(&[1.0, -1.0], true);
        let cfg = EkiConfig {
            momentum: 0.5,
            ..Default::default()
        };
        let prior = GaussianPrior::isotropic(1, 1.0);
        meki_step(
            &mut s,
            &identity_1d(),
            &LossSpec::default(),
            &Batch::new(&[], &[0.0], 1),
            &cfg,
            &prior,
            &mut SeededRng::new(0),
        )
        .unwrap();
        let v = s.momenta().unwrap();
        assert!((s.particle(0)[0] + 0.6).abs() < 1e-15 && (s.particle(1)[0] - 0.6).abs() < 1e-15);
        assert!((v[(0, 0)] + 1.4).abs() < 1e-15 && (v[(1, 0)] - 1.4).abs() < 1e-15);
    }

    #[test]
    fn collapsed_ensemble_is_fixed() {
        let mut s = scalar_state(&[0.7, 0.7, 0.7], false);
        let before = s.clone();
        eki_step(
            &mut s,
            &identity_1d(),
            &LossSpec::default(),
            &Batch::new(&[], &[3.0], 1),
            &EkiConfig::default(),
            &GaussianPrior::isotropic(1, 1.0),
            &mut SeededRng::new(0),
        )
        .unwrap();
        assert_eq!(s.particles(), before.particles());
    }

    #[test]
    fn shift_invariance_of_coupling() {
        let loss = LossSpec::SquaredError {
            gamma: Gamma::Scalar(2.0),
        };
        let g = Matrix::from_rows(&[[0.3, 1.0], [2.0, -1.0], [0.5, 0.5]]).unwrap();
        let y = [1.0, 2.0];
        let grads = |g: &Matrix, y: &[f64]| {
            let rows: Vec<Vec<f64>> = g.row_iter().map(|r| loss.gradient(r, y).unwrap()).collect();
            Matrix::from_rows(&rows).unwrap()
        };
        let d0 = coupling_matrix(&g, &grads(&g, &y)).unwrap();
        let c = 4.25;
        let gs = Matrix::new(3, 2, g.as_slice().iter().map(|v| v + c).collect()).unwrap();
        let ys: Vec<f64> = y.iter().map(|v| v + c).collect();
        let d1 = coupling_matrix(&gs, &grads(&gs, &ys)).unwrap();
        for (a, b) in d0.as_slice().iter().zip(d1.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_state_kind_is_rejected() {
        let prior = GaussianPrior::isotropic(1, 1.0);
        let batch = Batch::new(&[], &[0.0], 1);
        let mut rng = SeededRng::new(0);
        let cfg = EkiConfig::default();
        let mut plain = scalar_state(&[1.0, 2.0], false);
        let err = meki_step(&mut plain, &identity_1d(), &LossSpec::default(), &batch, &cfg, &prior, &mut rng);
        assert_eq!(err, Err(EkiError::MissingMomenta));
        let mut with_v = scalar_state(&[1.0, 2.0], true);
        let err = eki_step(&mut with_v, &identity_1d(), &LossSpec::default(), &batch, &cfg, &prior, &mut rng);
        assert_eq!(err, Err(EkiError::UnexpectedMomenta));
    }
}
