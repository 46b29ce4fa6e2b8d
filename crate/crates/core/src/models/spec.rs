use serde::{Deserialize, Serialize};

use super::{Activation, OutputMap};

/// Tensor shape `[channels, height, width]`; flat vectors are `[n, 1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape(pub [usize; 3]);

impl Shape {
    pub fn flat(n: usize) -> Self {
        Shape([n, 1, 1])
    }

    pub fn grid(channels: usize, height: usize, width: usize) -> Self {
        Shape([channels, height, width])
    }

    pub fn len(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> usize {
        self.0[0]
    }

    pub fn height(&self) -> usize {
        self.0[1]
    }

    pub fn width(&self) -> usize {
        self.0[2]
    }
}

fn one() -> usize {
    1
}

fn pair_one() -> [usize; 2] {
    [1, 1]
}

/// One layer of a feed-forward network. Input sizes are inferred from the
/// preceding layer's output shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    /// `σ(W z + b)` on the flattened input.
    Dense {
        outputs: usize,
        #[serde(default)]
        activation: Activation,
    },
    /// Zero-padded multi-channel cross-correlation followed by `σ`.
    Conv2d {
        out_channels: usize,
        kernel: [usize; 2],
        #[serde(default)]
        padding: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        activation: Activation,
    },
    /// Per-channel block maximum with kernel `(H₁, H₂)` and stride `(α, β)`.
    #[serde(rename = "maxpool")]
    MaxPool {
        kernel: [usize; 2],
        #[serde(default = "pair_one")]
        stride: [usize; 2],
    },
    /// Reinterprets a grid as a flat vector; parameter free.
    Flatten,
    Activation { activation: Activation },
    /// The final affine map `A` (a dense layer without nonlinearity).
    AffineOutput { outputs: usize },
}

/// `G(u|x) = S ∘ A ∘ F_{n−1} ∘ … ∘ F_0 (x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub output_map: OutputMap,
}

impl ModelSpec {
    /// Dense network `dims[0] - dims[1] - … - dims[n]` with `activation` on the
    /// hidden layers and an affine last layer.
    pub fn dense(dims: &[usize], activation: Activation, output_map: OutputMap) -> Self {
        assert!(dims.len() >= 2, "need at least input and output sizes");
        let mut layers: Vec<LayerSpec> = dims[1..dims.len() - 1]
            .iter()
            .map(|&outputs| LayerSpec::Dense { outputs, activation })
            .collect();
        layers.push(LayerSpec::AffineOutput {
            outputs: *dims.last().unwrap(),
        });
        ModelSpec {
            input: Shape::flat(dims[0]),
            layers,
            output_map,
        }
    }
}
