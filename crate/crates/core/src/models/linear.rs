use crate::numerics::Matrix;

use super::{check_len, ForwardModel, ModelError};

/// The linear forward map `G(u) = A·u`, with no data input.
///
/// Used for linear inverse problems, where the ensemble limit is known in
/// closed form.
#[derive(Debug, Clone)]
pub struct LinearMap {
    a: Matrix,
}

impl LinearMap {
    pub fn new(a: Matrix) -> Self {
        Self { a }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }
}

impl ForwardModel for LinearMap {
    fn param_count(&self) -> usize {
        self.a.cols()
    }

    fn input_dim(&self) -> usize {
        0
    }

    fn output_dim(&self) -> usize {
        self.a.rows()
    }

    /// Each of the `batch` (empty) inputs yields `A·u`.
    fn forward_batch(&self, params: &[f64], inputs: &[f64], batch: usize) -> Result<Vec<f64>, ModelError> {
        check_len("parameter vector", self.a.cols(), params.len())?;
        check_len("input batch", 0, inputs.len())?;
        let y = self.a.matvec(params).map_err(|e| ModelError::Invalid(e.to_string()))?;
        Ok(y.iter().copied().cycle().take(batch * y.len()).collect())
    }
}
