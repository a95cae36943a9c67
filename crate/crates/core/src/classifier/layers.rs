use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum LayerKind {
    Conv3x3 = 0,
    Relu = 1,
    MaxPool2x2 = 2,
    Flatten = 3,
    Dense = 4,
}

impl LayerKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => LayerKind::Conv3x3,
            1 => LayerKind::Relu,
            2 => LayerKind::MaxPool2x2,
            3 => LayerKind::Flatten,
            4 => LayerKind::Dense,
            _ => return None,
        })
    }
}

/// One layer of the network. Spatial tensors are `[channels, height, width]`
/// in channel-major order, matching [`crate::ImageTensor`].
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// 3x3 convolution, stride 1, zero padding 1. Weights are
    /// `[out][in][ky][kx]`.
    Conv3x3 {
        in_channels: usize,
        out_channels: usize,
        height: usize,
        width: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Relu {
        dims: Vec<usize>,
    },
    /// 2x2 max pooling, stride 2 (odd trailing rows/columns are dropped).
    MaxPool2x2 {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flatten {
        channels: usize,
        height: usize,
        width: usize,
    },
    /// Fully connected, weights `[out][in]`. Accepts any input of `inputs`
    /// values regardless of its spatial layout.
    Dense {
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
}

/// Parameter gradients of a single layer (empty for parameter-free layers).
#[derive(Debug, Clone, Default)]
pub struct ParamGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn conv3x3(in_channels: usize, out_channels: usize, height: usize, width: usize) -> Self {
        Layer::Conv3x3 {
            in_channels,
            out_channels,
            height,
            width,
            weights: vec![0.0; out_channels * in_channels * 9],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn dense(inputs: usize, outputs: usize) -> Self {
        Layer::Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv3x3 { .. } => LayerKind::Conv3x3,
            Layer::Relu { .. } => LayerKind::Relu,
            Layer::MaxPool2x2 { .. } => LayerKind::MaxPool2x2,
            Layer::Flatten { .. } => LayerKind::Flatten,
            Layer::Dense { .. } => LayerKind::Dense,
        }
    }

    pub fn input_dims(&self) -> Vec<usize> {
        match self {
            Layer::Conv3x3 {
                in_channels,
                height,
                width,
                ..
            } => vec![*in_channels, *height, *width],
            Layer::Relu { dims } => dims.clone(),
            Layer::MaxPool2x2 {
                channels,
                height,
                width,
            }
            | Layer::Flatten {
                channels,
                height,
                width,
            } => vec![*channels, *height, *width],
            Layer::Dense { inputs, .. } => vec![*inputs],
        }
    }

    pub fn output_dims(&self) -> Vec<usize> {
        match self {
            Layer::Conv3x3 {
                out_channels,
                height,
                width,
                ..
            } => vec![*out_channels, *height, *width],
            Layer::Relu { dims } => dims.clone(),
            Layer::MaxPool2x2 {
                channels,
                height,
                width,
            } => vec![*channels, height / 2, width / 2],
            Layer::Flatten {
                channels,
                height,
                width,
            } => vec![channels * height * width],
            Layer::Dense { outputs, .. } => vec![*outputs],
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_dims().iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output_dims().iter().product()
    }

    /// Whether this layer can consume the output of a layer producing `dims`.
    pub fn accepts(&self, dims: &[usize]) -> bool {
        match self {
            Layer::Dense { inputs, .. } => dims.iter().product::<usize>() == *inputs,
            _ => self.input_dims() == dims,
        }
    }

    pub fn params(&self) -> (&[f64], &[f64]) {
        match self {
            Layer::Conv3x3 { weights, bias, .. } | Layer::Dense { weights, bias, .. } => (weights, bias),
            _ => (&[], &[]),
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Vec<f64>, &mut Vec<f64>)> {
        match self {
            Layer::Conv3x3 { weights, bias, .. } | Layer::Dense { weights, bias, .. } => Some((weights, bias)),
            _ => None,
        }
    }

    /// Structural checks: positive sizes, parameter counts, finite values.
    pub fn validate(&self) -> Result<()> {
        if self.input_dims().contains(&0) || self.output_dims().contains(&0) {
            return Err(Error::ShapeChain(format!("{:?} has a zero-sized dimension", self.kind())));
        }
        let (w, b) = self.params();
        let (want_w, want_b) = match self {
            Layer::Conv3x3 {
                in_channels,
                out_channels,
                ..
            } => (in_channels * out_channels * 9, *out_channels),
            Layer::Dense { inputs, outputs, .. } => (inputs * outputs, *outputs),
            _ => (0, 0),
        };
        if w.len() != want_w || b.len() != want_b {
            return Err(Error::ShapeChain(format!(
                "{:?} expects {want_w} weights and {want_b} biases, has {} and {}",
                self.kind(),
                w.len(),
                b.len()
            )));
        }
        if !w.iter().chain(b).all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        match self {
            Layer::Conv3x3 {
                in_channels,
                out_channels,
                height,
                width,
                weights,
                bias,
            } => conv3x3_forward(input, *in_channels, *out_channels, *height, *width, weights, bias),
            Layer::Relu { .. } => input.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            Layer::MaxPool2x2 {
                channels,
                height,
                width,
            } => {
                let (out, _) = maxpool_forward(input, *channels, *height, *width);
                out
            }
            Layer::Flatten { .. } => input.to_vec(),
            Layer::Dense {
                inputs,
                outputs,
                weights,
                bias,
            } => (0..*outputs)
                .map(|o| {
                    let row = &weights[o * inputs..(o + 1) * inputs];
                    bias[o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
                })
                .collect(),
        }
    }

    /// Back-propagates `grad_out` through the layer evaluated at `input`.
    /// Returns the gradient w.r.t. the input and, when `with_params` is set,
    /// the gradient w.r.t. the layer parameters.
    pub fn backward(&self, input: &[f64], grad_out: &[f64], with_params: bool) -> (Vec<f64>, Option<ParamGrad>) {
        match self {
            Layer::Conv3x3 {
                in_channels,
                out_channels,
                height,
                width,
                weights,
                ..
            } => {
                let (gi, pg) = conv3x3_backward(
                    input,
                    grad_out,
                    *in_channels,
                    *out_channels,
                    *height,
                    *width,
                    weights,
                    with_params,
                );
                (gi, pg)
            }
            Layer::Relu { .. } => (
                input
                    .iter()
                    .zip(grad_out)
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect(),
                None,
            ),
            Layer::MaxPool2x2 {
                channels,
                height,
                width,
            } => {
                let (_, arg) = maxpool_forward(input, *channels, *height, *width);
                let mut gi = vec![0.0; input.len()];
                for (&src, &g) in arg.iter().zip(grad_out) {
                    gi[src] += g;
                }
                (gi, None)
            }
            Layer::Flatten { .. } => (grad_out.to_vec(), None),
            Layer::Dense {
                inputs,
                outputs,
                weights,
                ..
            } => {
                let mut gi = vec![0.0; *inputs];
                for o in 0..*outputs {
                    let g = grad_out[o];
                    if g == 0.0 {
                        continue;
                    }
                    let row = &weights[o * inputs..(o + 1) * inputs];
                    for (acc, w) in gi.iter_mut().zip(row) {
                        *acc += w * g;
                    }
                }
                let pg = with_params.then(|| {
                    let mut gw = vec![0.0; inputs * outputs];
                    for o in 0..*outputs {
                        let g = grad_out[o];
                        for (acc, x) in gw[o * inputs..(o + 1) * inputs].iter_mut().zip(input) {
                            *acc = g * x;
                        }
                    }
                    ParamGrad {
                        weights: gw,
                        bias: grad_out.to_vec(),
                    }
                });
                (gi, pg)
            }
        }
    }
}

/// Valid output range `[lo, hi)` for a kernel offset `k` in `{0, 1, 2}` so
/// that `out + k - 1` stays inside `[0, n)`.
#[inline]
fn valid_range(k: usize, n: usize) -> (usize, usize) {
    match k {
        0 => (1, n),
        1 => (0, n),
        _ => (0, n.saturating_sub(1)),
    }
}

fn conv3x3_forward(
    input: &[f64],
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let plane = h * w;
    let mut out = vec![0.0; cout * plane];
    for oc in 0..cout {
        let dst = &mut out[oc * plane..(oc + 1) * plane];
        dst.fill(bias[oc]);
        for ic in 0..cin {
            let src = &input[ic * plane..(ic + 1) * plane];
            let kernel = &weights[(oc * cin + ic) * 9..(oc * cin + ic + 1) * 9];
            for ky in 0..3 {
                let (y0, y1) = valid_range(ky, h);
                for kx in 0..3 {
                    let k = kernel[ky * 3 + kx];
                    if k == 0.0 {
                        continue;
                    }
                    let (x0, x1) = valid_range(kx, w);
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let d = &mut dst[y * w + x0..y * w + x1];
                        let s = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                        for (a, b) in d.iter_mut().zip(s) {
                            *a += k * b;
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv3x3_backward(
    input: &[f64],
    grad_out: &[f64],
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    with_params: bool,
) -> (Vec<f64>, Option<ParamGrad>) {
    let plane = h * w;
    let mut gi = vec![0.0; cin * plane];
    let mut gw = if with_params { vec![0.0; weights.len()] } else { Vec::new() };
    for oc in 0..cout {
        let g = &grad_out[oc * plane..(oc + 1) * plane];
        for ic in 0..cin {
            let src = &input[ic * plane..(ic + 1) * plane];
            let dst = &mut gi[ic * plane..(ic + 1) * plane];
            let base = (oc * cin + ic) * 9;
            for ky in 0..3 {
                let (y0, y1) = valid_range(ky, h);
                for kx in 0..3 {
                    let (x0, x1) = valid_range(kx, w);
                    let k = weights[base + ky * 3 + kx];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let gr = &g[y * w + x0..y * w + x1];
                        let off = sy * w + x0 + kx - 1;
                        let len = x1 - x0;
                        if k != 0.0 {
                            for (d, gv) in dst[off..off + len].iter_mut().zip(gr) {
                                *d += k * gv;
                            }
                        }
                        if with_params {
                            acc += gr.iter().zip(&src[off..off + len]).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                    if with_params {
                        gw[base + ky * 3 + kx] += acc;
                    }
                }
            }
        }
    }
    let pg = with_params.then(|| ParamGrad {
        weights: gw,
        bias: (0..cout).map(|oc| grad_out[oc * plane..(oc + 1) * plane].iter().sum()).collect(),
    });
    (gi, pg)
}

/// Returns pooled values and, for each output, the flat input index that
/// won (first maximum in scan order).
fn maxpool_forward(input: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let mut best = base + 2 * y * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * y + dy) * w + 2 * x + dx;
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                out.push(input[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}
