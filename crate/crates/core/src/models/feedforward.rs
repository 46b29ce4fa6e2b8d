use crate::numerics::gemm;
use crate::prior::{GaussianPrior, PriorBlock};

use super::{check_len, Activation, ForwardModel, LayerSpec, ModelError, ModelSpec, OutputMap, Shape};

/// Resolved geometry of a 2-D convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub padding: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Conv2dGeometry {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        (in_h, in_w): (usize, usize),
        (kernel_h, kernel_w): (usize, usize),
        padding: usize,
        stride: usize,
    ) -> Result<Self, String> {
        if kernel_h == 0 || kernel_w == 0 || stride == 0 {
            return Err("kernel and stride must be positive".into());
        }
        if in_channels == 0 || out_channels == 0 {
            return Err("channel counts must be positive".into());
        }
        let ph = in_h + 2 * padding;
        let pw = in_w + 2 * padding;
        if ph < kernel_h || pw < kernel_w {
            return Err(format!(
                "kernel {kernel_h}x{kernel_w} larger than padded input {ph}x{pw}"
            ));
        }
        Ok(Self {
            in_channels,
            out_channels,
            in_h,
            in_w,
            kernel_h,
            kernel_w,
            padding,
            stride,
            out_h: (ph - kernel_h) / stride + 1,
            out_w: (pw - kernel_w) / stride + 1,
        })
    }

    pub fn weight_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_channels
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.in_h * self.in_w
    }

    pub fn output_len(&self) -> usize {
        self.out_channels * self.out_h * self.out_w
    }
}

/// Multi-channel convolution: output channel `j` is
/// `σ(Σ_m s^{(j,m)} ⋆ x^{(m)} + b_j)` with zero padding.
///
/// `kernels` is laid out `[out][in][kh][kw]`, the input `[in][h][w]`.
pub fn conv2d_forward(
    geom: &Conv2dGeometry,
    kernels: &[f64],
    bias: &[f64],
    activation: Activation,
    input: &[f64],
) -> Result<Vec<f64>, ModelError> {
    check_len("conv2d kernels", geom.weight_count(), kernels.len())?;
    check_len("conv2d bias", geom.out_channels, bias.len())?;
    check_len("conv2d input", geom.input_len(), input.len())?;
    let mut out = vec![0.0; geom.output_len()];
    conv2d_into(geom, kernels, bias, input, &mut out);
    activation.apply_slice(&mut out);
    Ok(out)
}

fn conv2d_into(geom: &Conv2dGeometry, kernels: &[f64], bias: &[f64], input: &[f64], out: &mut [f64]) {
    let (ih, iw) = (geom.in_h as isize, geom.in_w as isize);
    let (kh, kw) = (geom.kernel_h, geom.kernel_w);
    let pad = geom.padding as isize;
    let plane_in = geom.in_h * geom.in_w;
    let plane_out = geom.out_h * geom.out_w;
    for j in 0..geom.out_channels {
        let dst = &mut out[j * plane_out..(j + 1) * plane_out];
        dst.fill(bias[j]);
        for m in 0..geom.in_channels {
            let src = &input[m * plane_in..(m + 1) * plane_in];
            let kernel = &kernels[(j * geom.in_channels + m) * kh * kw..][..kh * kw];
            for oy in 0..geom.out_h {
                let y0 = (oy * geom.stride) as isize - pad;
                for ox in 0..geom.out_w {
                    let x0 = (ox * geom.stride) as isize - pad;
                    let mut acc = 0.0;
                    for a in 0..kh {
                        let y = y0 + a as isize;
                        if y < 0 || y >= ih {
                            continue;
                        }
                        let row = &src[(y as usize) * geom.in_w..][..geom.in_w];
                        let krow = &kernel[a * kw..(a + 1) * kw];
                        for (b, k) in krow.iter().enumerate() {
                            let x = x0 + b as isize;
                            if x >= 0 && x < iw {
                                acc += k * row[x as usize];
                            }
                        }
                    }
                    dst[oy * geom.out_w + ox] += acc;
                }
            }
        }
    }
}

/// Per-channel block maximum
/// `p_{il} = max_{q<H₁, v<H₂} x_{α·i + q, β·l + v}`.
///
/// Returns the pooled grid with its height and width.
pub fn maxpool(
    input: &[f64],
    channels: usize,
    (h, w): (usize, usize),
    (kh, kw): (usize, usize),
    (sh, sw): (usize, usize),
) -> Result<(Vec<f64>, usize, usize), ModelError> {
    check_len("maxpool input", channels * h * w, input.len())?;
    let (out_h, out_w) = pool_dims((h, w), (kh, kw), (sh, sw)).map_err(ModelError::Invalid)?;
    let mut out = Vec::with_capacity(channels * out_h * out_w);
    for c in 0..channels {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for i in 0..out_h {
            for l in 0..out_w {
                let mut best = f64::NEG_INFINITY;
                for q in 0..kh {
                    let row = &plane[(sh * i + q) * w..];
                    for v in 0..kw {
                        best = best.max(row[sw * l + v]);
                    }
                }
                out.push(best);
            }
        }
    }
    Ok((out, out_h, out_w))
}

fn pool_dims(
    (h, w): (usize, usize),
    (kh, kw): (usize, usize),
    (sh, sw): (usize, usize),
) -> Result<(usize, usize), String> {
    if kh == 0 || kw == 0 || sh == 0 || sw == 0 {
        return Err("pooling kernel and stride must be positive".into());
    }
    if kh > h || kw > w {
        return Err(format!("pooling kernel {kh}x{kw} larger than input {h}x{w}"));
    }
    Ok(((h - kh) / sh + 1, (w - kw) / sw + 1))
}

#[derive(Debug, Clone)]
enum Plan {
    Dense {
        inputs: usize,
        outputs: usize,
        activation: Activation,
        offset: usize,
    },
    Conv {
        geom: Conv2dGeometry,
        activation: Activation,
        offset: usize,
    },
    Pool {
        channels: usize,
        input: (usize, usize),
        kernel: (usize, usize),
        stride: (usize, usize),
    },
    Activation(Activation),
    Flatten,
}

/// Weights and bias of one parametric layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTensors {
    pub weights: Vec<f64>,
    /// `[outputs, inputs]` for dense layers, `[out, in, kh, kw]` for convolutions.
    pub weight_shape: Vec<usize>,
    pub bias: Vec<f64>,
}

/// A validated feed-forward network.
#[derive(Debug, Clone)]
pub struct FeedForward {
    spec: ModelSpec,
    plans: Vec<Plan>,
    shapes: Vec<Shape>,
    param_count: usize,
}

impl FeedForward {
    pub fn new(spec: ModelSpec) -> Result<Self, ModelError> {
        if spec.input.is_empty() {
            return Err(ModelError::Invalid("empty input shape".into()));
        }
        let mut shape = spec.input;
        let mut shapes = vec![shape];
        let mut plans = Vec::with_capacity(spec.layers.len());
        let mut offset = 0;
        for (index, layer) in spec.layers.iter().enumerate() {
            let invalid = |reason: String| ModelError::InvalidLayer { index, reason };
            let (plan, next) = match *layer {
                LayerSpec::Dense { outputs, .. } | LayerSpec::AffineOutput { outputs } if outputs > 0 => {
                    let activation = activation_of(layer);
                    let inputs = shape.len();
                    let plan = Plan::Dense {
                        inputs,
                        outputs,
                        activation,
                        offset,
                    };
                    offset += outputs * inputs + outputs;
                    (plan, Shape::flat(outputs))
                }
                LayerSpec::Dense { .. } | LayerSpec::AffineOutput { .. } => {
                    return Err(invalid("dense layer needs at least one output".into()))
                }
                LayerSpec::Conv2d {
                    out_channels,
                    kernel,
                    padding,
                    stride,
                    activation,
                } => {
                    let geom = Conv2dGeometry::new(
                        shape.channels(),
                        out_channels,
                        (shape.height(), shape.width()),
                        (kernel[0], kernel[1]),
                        padding,
                        stride,
                    )
                    .map_err(invalid)?;
                    let plan = Plan::Conv {
                        geom,
                        activation,
                        offset,
                    };
                    offset += geom.param_count();
                    (plan, Shape::grid(out_channels, geom.out_h, geom.out_w))
                }
                LayerSpec::MaxPool { kernel, stride } => {
                    let input = (shape.height(), shape.width());
                    let (oh, ow) =
                        pool_dims(input, (kernel[0], kernel[1]), (stride[0], stride[1])).map_err(invalid)?;
                    let plan = Plan::Pool {
                        channels: shape.channels(),
                        input,
                        kernel: (kernel[0], kernel[1]),
                        stride: (stride[0], stride[1]),
                    };
                    (plan, Shape::grid(shape.channels(), oh, ow))
                }
                LayerSpec::Flatten => (Plan::Flatten, Shape::flat(shape.len())),
                LayerSpec::Activation { activation } => (Plan::Activation(activation), shape),
            };
            plans.push(plan);
            shape = next;
            shapes.push(shape);
        }
        if spec.output_map == OutputMap::Softmax && shape.len() < 2 {
            return Err(ModelError::Invalid("softmax output needs at least two classes".into()));
        }
        Ok(Self {
            spec,
            plans,
            shapes,
            param_count: offset,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Output shape of every layer, preceded by the input shape.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    /// Xavier prior: zero mean, variance `2/(fan_in + fan_out)` per layer,
    /// with channel counts standing in for widths on convolutions.
    pub fn xavier_prior(&self) -> GaussianPrior {
        let blocks = self
            .plans
            .iter()
            .filter_map(|p| match *p {
                Plan::Dense { inputs, outputs, .. } => Some(PriorBlock {
                    len: inputs * outputs + outputs,
                    variance: 2.0 / (inputs + outputs) as f64,
                }),
                Plan::Conv { geom, .. } => Some(PriorBlock {
                    len: geom.param_count(),
                    variance: 2.0 / (geom.in_channels + geom.out_channels) as f64,
                }),
                _ => None,
            })
            .collect();
        GaussianPrior::from_blocks(blocks)
    }

    /// Splits a flat parameter vector into per-layer tensors, in declaration
    /// order and row-major within each layer.
    pub fn unflatten(&self, params: &[f64]) -> Result<Vec<LayerTensors>, ModelError> {
        check_len("parameter vector", self.param_count, params.len())?;
        let mut out = Vec::new();
        for plan in &self.plans {
            let (offset, weight_shape, n_bias) = match *plan {
                Plan::Dense {
                    inputs,
                    outputs,
                    offset,
                    ..
                } => (offset, vec![outputs, inputs], outputs),
                Plan::Conv { geom, offset, .. } => (
                    offset,
                    vec![geom.out_channels, geom.in_channels, geom.kernel_h, geom.kernel_w],
                    geom.out_channels,
                ),
                _ => continue,
            };
            let n_w: usize = weight_shape.iter().product();
            out.push(LayerTensors {
                weights: params[offset..offset + n_w].to_vec(),
                weight_shape,
                bias: params[offset + n_w..offset + n_w + n_bias].to_vec(),
            });
        }
        Ok(out)
    }

    /// Inverse of [`FeedForward::unflatten`].
    pub fn flatten(&self, layers: &[LayerTensors]) -> Result<Vec<f64>, ModelError> {
        let mut out = Vec::with_capacity(self.param_count);
        for layer in layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        check_len("flattened parameters", self.param_count, out.len())?;
        Ok(out)
    }
}

fn activation_of(layer: &LayerSpec) -> Activation {
    match layer {
        LayerSpec::Dense { activation, .. } | LayerSpec::Conv2d { activation, .. } => *activation,
        LayerSpec::Activation { activation } => *activation,
        _ => Activation::Identity,
    }
}

impl ForwardModel for FeedForward {
    fn param_count(&self) -> usize {
        self.param_count
    }

    fn input_dim(&self) -> usize {
        self.spec.input.len()
    }

    fn output_dim(&self) -> usize {
        self.shapes.last().map_or(0, Shape::len)
    }

    fn forward_batch(&self, params: &[f64], inputs: &[f64], batch: usize) -> Result<Vec<f64>, ModelError> {
        check_len("parameter vector", self.param_count, params.len())?;
        check_len("input batch", batch * self.input_dim(), inputs.len())?;
        let mut cur = inputs.to_vec();
        for (plan, shape) in self.plans.iter().zip(&self.shapes[1..]) {
            match *plan {
                Plan::Dense {
                    inputs: d_in,
                    outputs: d_out,
                    activation,
                    offset,
                } => {
                    let w = &params[offset..offset + d_in * d_out];
                    let b = &params[offset + d_in * d_out..offset + d_in * d_out + d_out];
                    let mut next = vec![0.0; batch * d_out];
                    // next (B×out) = cur (B×in) · Wᵀ, with W stored out×in
                    gemm(
                        batch,
                        d_in,
                        d_out,
                        1.0,
                        (&cur, d_in as isize, 1),
                        (w, 1, d_in as isize),
                        0.0,
                        (&mut next, d_out as isize, 1),
                    );
                    for row in next.chunks_mut(d_out) {
                        for (x, bias) in row.iter_mut().zip(b) {
                            *x = activation.apply(*x + bias);
                        }
                    }
                    cur = next;
                }
                Plan::Conv {
                    geom,
                    activation,
                    offset,
                } => {
                    let kernels = &params[offset..offset + geom.weight_count()];
                    let bias = &params[offset + geom.weight_count()..offset + geom.param_count()];
                    let mut next = vec![0.0; batch * geom.output_len()];
                    for (src, dst) in cur
                        .chunks(geom.input_len())
                        .zip(next.chunks_mut(geom.output_len()))
                    {
                        conv2d_into(&geom, kernels, bias, src, dst);
                    }
                    activation.apply_slice(&mut next);
                    cur = next;
                }
                Plan::Pool {
                    channels,
                    input,
                    kernel,
                    stride,
                } => {
                    let mut next = Vec::with_capacity(batch * shape.len());
                    for src in cur.chunks(channels * input.0 * input.1) {
                        next.extend(maxpool(src, channels, input, kernel, stride)?.0);
                    }
                    cur = next;
                }
                Plan::Activation(a) => a.apply_slice(&mut cur),
                Plan::Flatten => {}
            }
        }
        let m = self.output_dim();
        for row in cur.chunks_mut(m.max(1)) {
            self.spec.output_map.apply(row);
        }
        Ok(cur)
    }
}
