use serde::{Deserialize, Serialize};

use crate::prior::{GaussianPrior, PriorBlock};

use super::{check_len, Activation, ForwardModel, ModelError, OutputMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RnnMode {
    /// Apply the output map only after the last step.
    #[default]
    LastOutput,
    /// Emit an output after every step.
    Sequence,
}

fn default_tanh() -> Activation {
    Activation::Tanh
}

fn one() -> usize {
    1
}

/// A stack of two-input layers `σ(W_h z + b_h + W_x q + b_x)` composed along
/// the hidden component, with one affine read-out shared by all time steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RnnSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    #[serde(default = "one")]
    pub layers: usize,
    pub output_dim: usize,
    #[serde(default = "default_tanh")]
    pub activation: Activation,
    #[serde(default)]
    pub output_map: OutputMap,
    #[serde(default)]
    pub mode: RnnMode,
    /// Sequence length seen by the batched forward map.
    #[serde(default = "one")]
    pub seq_len: usize,
}

/// Result of unrolling a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnOutput {
    /// One entry per step in sequence mode, otherwise just the last.
    pub outputs: Vec<Vec<f64>>,
    pub final_hidden: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RnnModel {
    spec: RnnSpec,
}

impl RnnModel {
    pub fn new(spec: RnnSpec) -> Result<Self, ModelError> {
        if spec.hidden_dim == 0 || spec.input_dim == 0 || spec.output_dim == 0 || spec.layers == 0 {
            return Err(ModelError::Invalid("rnn dimensions and layer count must be positive".into()));
        }
        if spec.seq_len == 0 {
            return Err(ModelError::Invalid("sequence length must be positive".into()));
        }
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &RnnSpec {
        &self.spec
    }

    fn layer_len(&self) -> usize {
        let (d, dh) = (self.spec.input_dim, self.spec.hidden_dim);
        dh * dh + dh * d + 2 * dh
    }

    fn readout_len(&self) -> usize {
        self.spec.output_dim * (self.spec.hidden_dim + 1)
    }

    /// `h_{t+1} = F_θ(h_t, x_t)` for one step.
    pub fn step(&self, params: &[f64], h: &[f64], x: &[f64]) -> Vec<f64> {
        let (d, dh) = (self.spec.input_dim, self.spec.hidden_dim);
        let mut z = h.to_vec();
        for theta in params.chunks_exact(self.layer_len()).take(self.spec.layers) {
            let (wh, rest) = theta.split_at(dh * dh);
            let (wx, rest) = rest.split_at(dh * d);
            let (bh, bx) = rest.split_at(dh);
            z = (0..dh)
                .map(|i| {
                    let a: f64 = wh[i * dh..(i + 1) * dh].iter().zip(&z).map(|(w, v)| w * v).sum();
                    let b: f64 = wx[i * d..(i + 1) * d].iter().zip(x).map(|(w, v)| w * v).sum();
                    self.spec.activation.apply(a + bh[i] + b + bx[i])
                })
                .collect();
        }
        z
    }

    /// `S(A·h)` with the shared read-out.
    pub fn readout(&self, params: &[f64], h: &[f64]) -> Vec<f64> {
        let dh = self.spec.hidden_dim;
        let m = self.spec.output_dim;
        let ro = &params[self.spec.layers * self.layer_len()..];
        let (w, b) = ro.split_at(m * dh);
        let mut y: Vec<f64> = (0..m)
            .map(|i| w[i * dh..(i + 1) * dh].iter().zip(h).map(|(a, v)| a * v).sum::<f64>() + b[i])
            .collect();
        self.spec.output_map.apply(&mut y);
        y
    }

    /// Unrolls `xs` (`T × d`, row-major) from `h0`.
    pub fn run(&self, params: &[f64], xs: &[f64], h0: &[f64]) -> Result<RnnOutput, ModelError> {
        check_len("parameter vector", self.param_count(), params.len())?;
        check_len("initial hidden state", self.spec.hidden_dim, h0.len())?;
        let d = self.spec.input_dim;
        if xs.is_empty() || xs.len() % d != 0 {
            return Err(ModelError::DimensionMismatch {
                context: "input sequence",
                expected: d * (xs.len() / d).max(1),
                found: xs.len(),
            });
        }
        let mut h = h0.to_vec();
        let mut outputs = Vec::new();
        let steps = xs.len() / d;
        for (t, x) in xs.chunks_exact(d).enumerate() {
            h = self.step(params, &h, x);
            if self.spec.mode == RnnMode::Sequence || t + 1 == steps {
                outputs.push(self.readout(params, &h));
            }
        }
        Ok(RnnOutput {
            outputs,
            final_hidden: h,
        })
    }

    /// Xavier prior treating each layer as a map `R^{d_h + d} → R^{d_h}` and
    /// the read-out as `R^{d_h} → R^m`.
    pub fn xavier_prior(&self) -> GaussianPrior {
        let (d, dh, m) = (self.spec.input_dim, self.spec.hidden_dim, self.spec.output_dim);
        let mut blocks: Vec<PriorBlock> = (0..self.spec.layers)
            .map(|_| PriorBlock {
                len: self.layer_len(),
                variance: 2.0 / (2 * dh + d) as f64,
            })
            .collect();
        blocks.push(PriorBlock {
            len: self.readout_len(),
            variance: 2.0 / (dh + m) as f64,
        });
        GaussianPrior::from_blocks(blocks)
    }
}

impl ForwardModel for RnnModel {
    fn param_count(&self) -> usize {
        self.spec.layers * self.layer_len() + self.readout_len()
    }

    fn input_dim(&self) -> usize {
        self.spec.seq_len * self.spec.input_dim
    }

    fn output_dim(&self) -> usize {
        match self.spec.mode {
            RnnMode::LastOutput => self.spec.output_dim,
            RnnMode::Sequence => self.spec.seq_len * self.spec.output_dim,
        }
    }

    /// Unrolls each input sequence from `h₀ = 0`.
    fn forward_batch(&self, params: &[f64], inputs: &[f64], batch: usize) -> Result<Vec<f64>, ModelError> {
        check_len("input batch", batch * self.input_dim(), inputs.len())?;
        let h0 = vec![0.0; self.spec.hidden_dim];
        let mut out = Vec::with_capacity(batch * self.output_dim());
        for seq in inputs.chunks_exact(self.input_dim()) {
            out.extend(self.run(params, seq, &h0)?.outputs.into_iter().flatten());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{FeedForward, LayerSpec, ModelSpec, Shape};
    use crate::numerics::SeededRng;
    use rand::Rng;

    fn spec(d: usize, dh: usize, layers: usize, mode: RnnMode) -> RnnSpec {
        RnnSpec {
            input_dim: d,
            hidden_dim: dh,
            layers,
            output_dim: 1,
            activation: Activation::Tanh,
            output_map: OutputMap::Identity,
            mode,
            seq_len: 2,
        }
    }

    #[test]
    fn parameter_count_formula() {
        let m = RnnModel::new(spec(3, 4, 2, RnnMode::LastOutput)).unwrap();
        assert_eq!(m.param_count(), 2 * (16 + 12 + 8) + 5);
    }

    #[test]
    fn zero_weights_keep_zero_hidden_state() {
        let m = RnnModel::new(spec(2, 3, 2, RnnMode::Sequence)).unwrap();
        let p = vec![0.0; m.param_count()];
        let out = m.run(&p, &[1.0, -2.0, 3.0, 0.5, 7.0, 7.0], &[0.0; 3]).unwrap();
        assert_eq!(out.final_hidden, vec![0.0; 3]);
        assert_eq!(out.outputs.len(), 3);
    }

    #[test]
    fn single_step_is_a_dense_layer_on_stacked_input() {
        let mut rng = SeededRng::new(17);
        let (d, dh) = (2, 3);
        let m = RnnModel::new(spec(d, dh, 1, RnnMode::LastOutput)).unwrap();
        let p: Vec<f64> = (0..m.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h0 = [0.3, -0.1, 0.8];
        let x = [0.5, -1.5];
        let got = m.run(&p, &x, &h0).unwrap().final_hidden;

        // dense layer on [h0; x] with W = [W_h W_x], b = b_h + b_x
        let dense = FeedForward::new(ModelSpec {
            input: Shape::flat(dh + d),
            layers: vec![LayerSpec::Dense {
                outputs: dh,
                activation: Activation::Tanh,
            }],
            output_map: OutputMap::Identity,
        })
        .unwrap();
        let (wh, rest) = p.split_at(dh * dh);
        let (wx, rest) = rest.split_at(dh * d);
        let mut q = Vec::new();
        for i in 0..dh {
            q.extend_from_slice(&wh[i * dh..(i + 1) * dh]);
            q.extend_from_slice(&wx[i * d..(i + 1) * d]);
        }
        q.extend((0..dh).map(|i| rest[i] + rest[dh + i]));
        let stacked: Vec<f64> = h0.iter().chain(&x).copied().collect();
        let expect = dense.forward(&q, &stacked).unwrap();
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn two_steps_match_manual_unroll() {
        let mut rng = SeededRng::new(5);
        let m = RnnModel::new(spec(1, 2, 1, RnnMode::Sequence)).unwrap();
        let p: Vec<f64> = (0..m.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        // layout: wh(4) wx(2) bh(2) bx(2) | wo(2) bo(1)
        let cell = |h: [f64; 2], x: f64| {
            [
                (p[0] * h[0] + p[1] * h[1] + p[6] + p[4] * x + p[8]).tanh(),
                (p[2] * h[0] + p[3] * h[1] + p[7] + p[5] * x + p[9]).tanh(),
            ]
        };
        let read = |h: [f64; 2]| p[10] * h[0] + p[11] * h[1] + p[12];
        let h1 = cell([0.0, 0.0], 0.7);
        let h2 = cell(h1, -0.4);
        let out = m.run(&p, &[0.7, -0.4], &[0.0, 0.0]).unwrap();
        assert!((out.outputs[0][0] - read(h1)).abs() < 1e-14);
        assert!((out.outputs[1][0] - read(h2)).abs() < 1e-14);
        assert_eq!(out.final_hidden, h2.to_vec());
        assert_eq!(m.forward(&p, &[0.7, -0.4]).unwrap(), vec![read(h1), read(h2)]);
    }

    #[test]
    fn xavier_blocks() {
        let m = RnnModel::new(spec(1, 8, 1, RnnMode::LastOutput)).unwrap();
        let prior = m.xavier_prior();
        let blocks = prior.blocks().unwrap();
        assert_eq!(prior.dim(), m.param_count());
        assert_eq!(blocks[0].variance, 2.0 / 17.0);
        assert_eq!(blocks[1].variance, 2.0 / 9.0);
    }

    #[test]
    fn dimension_errors() {
        let m = RnnModel::new(spec(2, 2, 1, RnnMode::LastOutput)).unwrap();
        let p = vec![0.0; m.param_count()];
        assert!(m.run(&p, &[1.0, 2.0, 3.0], &[0.0; 2]).is_err());
        assert!(m.run(&p, &[1.0, 2.0], &[0.0; 3]).is_err());
        assert!(RnnModel::new(spec(2, 0, 1, RnnMode::LastOutput)).is_err());
    }
}
