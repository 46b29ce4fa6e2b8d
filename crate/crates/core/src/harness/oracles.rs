//! Reference computations used to check the optimizer.

use crate::eki::Batch;
use crate::losses::{Gamma, LossSpec};
use crate::models::ForwardModel;
use crate::numerics::{mean_rows, sym_eig, Matrix};

use super::HarnessError;

const RANK_TOL: f64 = 1e-10;

/// `Φ(u) = Σ_j L(G(u|x_j), y_j)` over a batch.
pub fn batch_loss<M: ForwardModel + ?Sized>(
    model: &M,
    loss: &LossSpec,
    params: &[f64],
    batch: &Batch<'_>,
) -> Result<f64, HarnessError> {
    let pred = model.forward_batch(params, batch.inputs, batch.len)?;
    let v = loss.value(&pred, batch.targets)?;
    if !v.is_finite() {
        return Err(HarnessError::Metric("non-finite loss evaluation".into()));
    }
    Ok(v)
}

/// Central-difference gradient of the batch loss with step `h`.
pub fn fd_gradient<M: ForwardModel + ?Sized>(
    model: &M,
    loss: &LossSpec,
    params: &[f64],
    batch: &Batch<'_>,
    h: f64,
) -> Result<Vec<f64>, HarnessError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(HarnessError::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let mut u = params.to_vec();
    let mut grad = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        let orig = u[i];
        u[i] = orig + h;
        let plus = batch_loss(model, loss, &u, batch)?;
        u[i] = orig - h;
        let minus = batch_loss(model, loss, &u, batch)?;
        u[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Minimizer of a weighted least-squares problem over an affine subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct LsqSolution {
    pub u: Vec<f64>,
    /// The reduced normal equations were rank deficient; `u` is then the
    /// point of smallest displacement from the origin of the subspace.
    pub singular: bool,
}

/// Minimizes `½‖y − A u‖²_Γ` over `u ∈ origin + span(rows of directions)`.
pub fn projected_lsq_oracle(
    a: &Matrix,
    y: &[f64],
    gamma: &Gamma,
    origin: &[f64],
    directions: &Matrix,
) -> Result<LsqSolution, HarnessError> {
    let (m, n) = a.shape();
    if y.len() != m || origin.len() != n || directions.cols() != n {
        return Err(HarnessError::Shape(format!(
            "A is {m}x{n}, y has {} entries, origin {}, directions are {}-dimensional",
            y.len(),
            origin.len(),
            directions.cols()
        )));
    }
    gamma.validate()?;

    // orthonormal basis of the direction span
    let gram = directions.matmul_t(directions)?;
    let eig = sym_eig(&gram)?;
    let top = eig.values.iter().copied().fold(0.0, f64::max);
    let mut basis = Vec::new();
    for (i, lambda) in eig.values.iter().enumerate() {
        if *lambda > RANK_TOL * top {
            let w = eig.vector(i);
            let q = directions.t_matmul(&Matrix::new(w.len(), 1, w)?)?;
            basis.push(q.as_slice().iter().map(|v| v / lambda.sqrt()).collect::<Vec<_>>());
        }
    }
    if basis.is_empty() {
        return Err(HarnessError::Shape("subspace directions are all zero".into()));
    }
    let q = Matrix::from_rows(&basis)?.transpose();

    // whitened reduced problem  min ‖W(A origin + A Q z − y)‖
    let mut b = a.matmul(&q)?;
    let a_origin = a.matvec(origin)?;
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        let w = gamma.variance(i).sqrt().recip();
        for v in b.row_mut(i) {
            *v *= w;
        }
        rhs[i] = (y[i] - a_origin[i]) * w;
    }
    let normal = b.t_matmul(&b)?;
    let bt_rhs = b.transpose().matvec(&rhs)?;
    let eig = sym_eig(&normal)?;
    let top = eig.values.iter().copied().fold(0.0, f64::max);
    let mut z = vec![0.0; q.cols()];
    let mut singular = top == 0.0;
    for (i, mu) in eig.values.iter().enumerate() {
        if top > 0.0 && *mu > RANK_TOL * top {
            let v = eig.vector(i);
            let coef = v.iter().zip(&bt_rhs).map(|(a, b)| a * b).sum::<f64>() / mu;
            for (zk, vk) in z.iter_mut().zip(&v) {
                *zk += coef * vk;
            }
        } else {
            singular = true;
        }
    }
    let shift = q.matvec(&z)?;
    let u = origin.iter().zip(&shift).map(|(o, s)| o + s).collect();
    Ok(LsqSolution { u, singular })
}

/// The oracle over the affine span of an ensemble: origin `ū`, directions
/// `u⁽ʲ⁾ − ū`.
pub fn projected_lsq_from_ensemble(
    a: &Matrix,
    y: &[f64],
    gamma: &Gamma,
    ensemble: &Matrix,
) -> Result<LsqSolution, HarnessError> {
    let mean = mean_rows(ensemble);
    let mut dirs = ensemble.clone();
    for r in 0..dirs.rows() {
        for (v, m) in dirs.row_mut(r).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    projected_lsq_oracle(a, y, gamma, &mean, &dirs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LinearMap;
    use crate::numerics::SeededRng;

    /// `Φ(u) = ‖u‖²` written as a squared-error loss with `Γ = ½`.
    fn quadratic(n: usize) -> (LinearMap, LossSpec) {
        (
            LinearMap::new(Matrix::identity(n)),
            LossSpec::SquaredError { gamma: Gamma::Scalar(0.5) },
        )
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
        let mut data = vec![0.0; rows * cols];
        rng.fill_standard_normal(&mut data);
        Matrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn fd_gradient_of_quadratic() {
        let (model, loss) = quadratic(3);
        let u = [0.5, -1.0, 2.0];
        let zero = [0.0; 3];
        let g = fd_gradient(&model, &loss, &u, &Batch::new(&[], &zero, 1), 1e-4).unwrap();
        for (gi, ui) in g.iter().zip(u) {
            assert!((gi - 2.0 * ui).abs() < 1e-8);
        }
        assert!(fd_gradient(&model, &loss, &u, &Batch::new(&[], &zero, 1), 0.0).is_err());
    }

    #[test]
    fn fd_gradient_of_linear_least_squares() {
        let mut rng = SeededRng::new(4);
        let a = random_matrix(4, 3, &mut rng);
        let y = [0.3, -0.2, 1.0, 0.5];
        let u = [0.1, 0.7, -0.4];
        let gamma = Gamma::Diagonal(vec![0.5, 1.0, 2.0, 4.0]);
        let loss = LossSpec::SquaredError { gamma: gamma.clone() };
        let g = fd_gradient(&LinearMap::new(a.clone()), &loss, &u, &Batch::new(&[], &y, 1), 1e-5).unwrap();
        let r = a.matvec(&u).unwrap();
        let weighted: Vec<f64> = (0..4).map(|i| (r[i] - y[i]) / gamma.variance(i)).collect();
        let expect = a.transpose().matvec(&weighted).unwrap();
        for (gi, ei) in g.iter().zip(expect) {
            assert!((gi - ei).abs() < 1e-6);
        }
    }

    #[test]
    fn fd_gradient_is_second_order() {
        use crate::models::{Activation, FeedForward, ModelSpec, OutputMap};
        let model = FeedForward::new(ModelSpec::dense(&[2, 3, 1], Activation::Tanh, OutputMap::Identity)).unwrap();
        let mut rng = SeededRng::new(9);
        let u = model.xavier_prior().sample(&mut rng);
        let x = [0.4, -0.8];
        let y = [0.3];
        let batch = Batch::new(&x, &y, 1);
        let loss = LossSpec::default();
        let fine = fd_gradient(&model, &loss, &u, &batch, 1e-5).unwrap();
        let err = |h: f64| {
            let g = fd_gradient(&model, &loss, &u, &batch, h).unwrap();
            g.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let ratio = err(0.1) / err(0.05);
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn oracle_identity_problem() {
        let mut rng = SeededRng::new(1);
        let ensemble = random_matrix(6, 3, &mut rng);
        let y = [1.0, -2.0, 0.5];
        let sol = projected_lsq_from_ensemble(&Matrix::identity(3), &y, &Gamma::default(), &ensemble).unwrap();
        assert!(!sol.singular);
        for (a, b) in sol.u.iter().zip(y) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_single_direction() {
        let mut rng = SeededRng::new(2);
        let a = random_matrix(4, 3, &mut rng);
        let y = [1.0, 0.0, -1.0, 2.0];
        let gamma = Gamma::Diagonal(vec![1.0, 2.0, 0.5, 1.0]);
        let e1 = Matrix::from_rows(&[[1.0, 0.0, 0.0]]).unwrap();
        let sol = projected_lsq_oracle(&a, &y, &gamma, &[0.0; 3], &e1).unwrap();
        let col = a.col(0);
        let num: f64 = (0..4).map(|i| col[i] * y[i] / gamma.variance(i)).sum();
        let den: f64 = (0..4).map(|i| col[i] * col[i] / gamma.variance(i)).sum();
        assert!((sol.u[0] - num / den).abs() < 1e-12);
        assert_eq!(&sol.u[1..], &[0.0, 0.0]);
    }

    #[test]
    fn oracle_flags_rank_deficiency() {
        // the direction lies in the null space of A
        let a = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        let dirs = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        let sol = projected_lsq_oracle(&a, &[1.0, 1.0], &Gamma::default(), &[0.5, 0.5], &dirs).unwrap();
        assert!(sol.singular);
        assert_eq!(sol.u, vec![0.5, 0.5]);
        assert!(projected_lsq_oracle(&a, &[1.0, 1.0], &Gamma::default(), &[0.0; 2], &Matrix::zeros(2, 2)).is_err());
    }
}
