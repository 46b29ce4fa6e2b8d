//! Symmetric eigendecomposition by the cyclic Jacobi method.

use super::{Matrix, NumericsError};

/// Tolerance used to accept a matrix as symmetric, scaled by `max(1, max|m_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, matching `values`.
    pub vectors: Matrix,
}

impl SymEig {
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.col(i)
    }

    /// `V·diag(λ)·Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for r in 0..n {
            for (c, lambda) in self.values.iter().enumerate() {
                scaled[(r, c)] *= lambda;
            }
        }
        scaled
            .matmul_t(&self.vectors)
            .expect("square factors always conform")
    }
}

/// Eigendecomposition of a symmetric matrix with ascending eigenvalues.
pub fn sym_eig(m: &Matrix) -> Result<SymEig, NumericsError> {
    if !m.is_square() {
        return Err(NumericsError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let asym = m.asymmetry();
    if asym > SYMMETRY_TOL * m.max_abs().max(1.0) {
        return Err(NumericsError::NotSymmetric(asym));
    }
    let n = m.rows();
    // symmetrize so rounding noise in the input cannot bias the rotations
    let mut a = m.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm();

    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off <= f64::EPSILON * 1e-2 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // skip rotations that cannot change the diagonal in floating point
                if apq.abs() < 1e-18 * (app.abs() + aqq.abs()) {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, dst)] = v[(r, src)];
        }
    }
    Ok(SymEig { values, vectors })
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Applies `A ← Jᵀ A J`, `V ← V J` for the plane rotation in (p, q).
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    {
        let cols = a.cols();
        let data = a.as_mut_slice();
        let (lo, hi) = data.split_at_mut(q * cols);
        let row_p = &mut lo[p * cols..(p + 1) * cols];
        let row_q = &mut hi[..cols];
        for (apk, aqk) in row_p.iter_mut().zip(row_q.iter_mut()) {
            let x = *apk;
            let y = *aqk;
            *apk = c * x - s * y;
            *aqk = s * x + c * y;
        }
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;
    use rand::Rng;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = SeededRng::new(seed);
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let x: f64 = rng.random_range(-1.0..1.0);
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
        m
    }

    fn check_decomposition(m: &Matrix, eig: &SymEig) {
        let n = m.rows();
        for i in 0..n {
            let v = eig.vector(i);
            let mv = m.matvec(&v).unwrap();
            for r in 0..n {
                assert!((mv[r] - eig.values[i] * v[r]).abs() < 1e-8);
            }
        }
        let vtv = eig.vectors.t_matmul(&eig.vectors).unwrap();
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((vtv[(i, j)] - expect).abs() < 1e-8);
            }
        }
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        let rec = eig.reconstruct();
        for (x, y) in rec.as_slice().iter().zip(m.as_slice()) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let eig = sym_eig(&Matrix::identity(2)).unwrap();
        assert_eq!(eig.values, vec![1.0, 1.0]);
        check_decomposition(&Matrix::identity(2), &eig);
    }

    #[test]
    fn two_by_two_laplacian() {
        let m = Matrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]).unwrap();
        let eig = sym_eig(&m).unwrap();
        assert!(eig.values[0].abs() < 1e-14);
        assert!((eig.values[1] - 2.0).abs() < 1e-14);
        let v0 = eig.vector(0);
        assert!((v0[0] - v0[1]).abs() < 1e-14);
        check_decomposition(&m, &eig);
    }

    #[test]
    fn random_symmetric_residuals() {
        for seed in 0..5 {
            let m = random_symmetric(5, seed);
            let eig = sym_eig(&m).unwrap();
            check_decomposition(&m, &eig);
        }
        let big = random_symmetric(40, 99);
        check_decomposition(&big, &sym_eig(&big).unwrap());
    }

    #[test]
    fn rejects_non_square_and_asymmetric() {
        assert!(matches!(
            sym_eig(&Matrix::zeros(2, 3)),
            Err(NumericsError::NotSquare { .. })
        ));
        let m = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&m), Err(NumericsError::NotSymmetric(_))));
    }

    #[test]
    fn empty_and_scalar() {
        let eig = sym_eig(&Matrix::zeros(0, 0)).unwrap();
        assert!(eig.values.is_empty());
        let eig = sym_eig(&Matrix::from_rows(&[[3.5]]).unwrap()).unwrap();
        assert_eq!(eig.values, vec![3.5]);
    }
}
