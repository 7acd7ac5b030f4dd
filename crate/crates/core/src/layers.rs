//! Minimal dense layers with hand-written backward passes.
//!
//! Activations are stored channel-major (`[channels][height][width]` or
//! `[channels][length]`). Every `backward` accumulates into a gradient holder
//! of the same layer type, so a zeroed clone of a network doubles as its
//! gradient buffer.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![F::zero(); n],
        }
    }

    /// Uniform fan-in (He) initialization: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
    pub fn he_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let bound = libm::sqrt(6.0 / fan_in.max(1) as f64);
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| F::of(rng.random_range(-bound..bound)))
            .collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = F::zero());
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| G::of(v.f64())).collect(),
        }
    }
}

/// Spatial size of a valid (unpadded) convolution or pooling along one axis.
pub fn valid_extent(input: usize, kernel: usize, stride: usize) -> Option<usize> {
    if input < kernel || stride == 0 {
        None
    } else {
        Some((input - kernel) / stride + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<F> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out][in][kernel]`
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
}

impl<F: Real> Conv1d<F> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: Tensor::he_uniform(
                &[out_channels, in_channels, kernel],
                in_channels * kernel,
                rng,
            ),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    pub fn output_len(&self, len: usize) -> usize {
        len + 1 - self.kernel
    }

    pub fn forward(&self, input: &[F], len: usize) -> Vec<F> {
        let out_len = self.output_len(len);
        let mut out = vec![F::zero(); self.out_channels * out_len];
        for oc in 0..self.out_channels {
            let out_row = &mut out[oc * out_len..(oc + 1) * out_len];
            out_row.iter_mut().for_each(|v| *v = self.bias.data[oc]);
            for ic in 0..self.in_channels {
                let in_row = &input[ic * len..(ic + 1) * len];
                for t in 0..self.kernel {
                    let w = self.weight.data[(oc * self.in_channels + ic) * self.kernel + t];
                    for (o, &x) in out_row.iter_mut().zip(&in_row[t..t + out_len]) {
                        *o = *o + w * x;
                    }
                }
            }
        }
        out
    }

    pub fn backward(
        &self,
        input: &[F],
        len: usize,
        grad_out: &[F],
        grad: &mut Self,
        mut grad_input: Option<&mut [F]>,
    ) {
        let out_len = self.output_len(len);
        for oc in 0..self.out_channels {
            let g_row = &grad_out[oc * out_len..(oc + 1) * out_len];
            grad.bias.data[oc] = grad.bias.data[oc] + g_row.iter().copied().sum::<F>();
            for ic in 0..self.in_channels {
                let in_row = &input[ic * len..(ic + 1) * len];
                for t in 0..self.kernel {
                    let wi = (oc * self.in_channels + ic) * self.kernel + t;
                    let mut acc = F::zero();
                    for (&g, &x) in g_row.iter().zip(&in_row[t..t + out_len]) {
                        acc = acc + g * x;
                    }
                    grad.weight.data[wi] = grad.weight.data[wi] + acc;
                    if let Some(gi) = grad_input.as_deref_mut() {
                        let w = self.weight.data[wi];
                        let gi_row = &mut gi[ic * len + t..ic * len + t + out_len];
                        for (d, &g) in gi_row.iter_mut().zip(g_row) {
                            *d = *d + w * g;
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape2d {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape2d {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<F> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    /// `[out][in][kh][kw]`
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
}

impl<F: Real> Conv2d<F> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        rng: &mut R,
    ) -> Self {
        let (kh, kw) = kernel;
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: Tensor::he_uniform(
                &[out_channels, in_channels, kh, kw],
                in_channels * kh * kw,
                rng,
            ),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    pub fn output_shape(&self, input: Shape2d) -> Option<Shape2d> {
        Some(Shape2d {
            channels: self.out_channels,
            height: valid_extent(input.height, self.kernel.0, self.stride.0)?,
            width: valid_extent(input.width, self.kernel.1, self.stride.1)?,
        })
    }

    fn weight_index(&self, oc: usize, ic: usize, dy: usize, dx: usize) -> usize {
        ((oc * self.in_channels + ic) * self.kernel.0 + dy) * self.kernel.1 + dx
    }

    pub fn forward(&self, input: &[F], shape: Shape2d) -> (Vec<F>, Shape2d) {
        let out_shape = self.output_shape(shape).expect("input smaller than kernel");
        let (oh, ow) = (out_shape.height, out_shape.width);
        let (sh, sw) = self.stride;
        let plane_in = shape.height * shape.width;
        let mut out = vec![F::zero(); out_shape.len()];
        for oc in 0..self.out_channels {
            let out_plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
            out_plane.iter_mut().for_each(|v| *v = self.bias.data[oc]);
            for ic in 0..self.in_channels {
                let in_plane = &input[ic * plane_in..(ic + 1) * plane_in];
                for dy in 0..self.kernel.0 {
                    for dx in 0..self.kernel.1 {
                        let w = self.weight.data[self.weight_index(oc, ic, dy, dx)];
                        for oy in 0..oh {
                            let row_start = (oy * sh + dy) * shape.width + dx;
                            let in_row = &in_plane[row_start..];
                            let out_row = &mut out_plane[oy * ow..(oy + 1) * ow];
                            if sw == 1 {
                                for (o, &x) in out_row.iter_mut().zip(&in_row[..ow]) {
                                    *o = *o + w * x;
                                }
                            } else {
                                for (ox, o) in out_row.iter_mut().enumerate() {
                                    *o = *o + w * in_row[ox * sw];
                                }
                            }
                        }
                    }
                }
            }
        }
        (out, out_shape)
    }

    pub fn backward(
        &self,
        input: &[F],
        shape: Shape2d,
        grad_out: &[F],
        grad: &mut Self,
        mut grad_input: Option<&mut [F]>,
    ) {
        let out_shape = self.output_shape(shape).expect("input smaller than kernel");
        let (oh, ow) = (out_shape.height, out_shape.width);
        let (sh, sw) = self.stride;
        let plane_in = shape.height * shape.width;
        for oc in 0..self.out_channels {
            let g_plane = &grad_out[oc * oh * ow..(oc + 1) * oh * ow];
            grad.bias.data[oc] = grad.bias.data[oc] + g_plane.iter().copied().sum::<F>();
            for ic in 0..self.in_channels {
                let in_plane = &input[ic * plane_in..(ic + 1) * plane_in];
                for dy in 0..self.kernel.0 {
                    for dx in 0..self.kernel.1 {
                        let wi = self.weight_index(oc, ic, dy, dx);
                        let w = self.weight.data[wi];
                        let mut acc = F::zero();
                        for oy in 0..oh {
                            let row_start = (oy * sh + dy) * shape.width + dx;
                            let g_row = &g_plane[oy * ow..(oy + 1) * ow];
                            if sw == 1 {
                                let in_row = &in_plane[row_start..row_start + ow];
                                for (&g, &x) in g_row.iter().zip(in_row) {
                                    acc = acc + g * x;
                                }
                                if let Some(gi) = grad_input.as_deref_mut() {
                                    let base = ic * plane_in + row_start;
                                    for (d, &g) in gi[base..base + ow].iter_mut().zip(g_row) {
                                        *d = *d + w * g;
                                    }
                                }
                            } else {
                                for (ox, &g) in g_row.iter().enumerate() {
                                    acc = acc + g * in_plane[row_start + ox * sw];
                                }
                                if let Some(gi) = grad_input.as_deref_mut() {
                                    let base = ic * plane_in + row_start;
                                    for (ox, &g) in g_row.iter().enumerate() {
                                        let d = &mut gi[base + ox * sw];
                                        *d = *d + w * g;
                                    }
                                }
                            }
                        }
                        grad.weight.data[wi] = grad.weight.data[wi] + acc;
                    }
                }
            }
        }
    }
}

/// 2x2 max pooling with stride 2; odd extents are floored.
pub fn maxpool2x2_shape(input: Shape2d) -> Option<Shape2d> {
    Some(Shape2d {
        channels: input.channels,
        height: valid_extent(input.height, 2, 2)?,
        width: valid_extent(input.width, 2, 2)?,
    })
}

/// Returns the pooled map and, per output cell, the flat input index of its maximum.
pub fn maxpool2x2_forward<F: Real>(input: &[F], shape: Shape2d) -> (Vec<F>, Vec<usize>, Shape2d) {
    let out_shape = maxpool2x2_shape(shape).expect("pool input too small");
    let mut out = Vec::with_capacity(out_shape.len());
    let mut argmax = Vec::with_capacity(out_shape.len());
    let plane = shape.height * shape.width;
    for c in 0..shape.channels {
        for oy in 0..out_shape.height {
            for ox in 0..out_shape.width {
                let mut best_idx = c * plane + (2 * oy) * shape.width + 2 * ox;
                let mut best = input[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = c * plane + (2 * oy + dy) * shape.width + 2 * ox + dx;
                    if input[idx] > best {
                        best = input[idx];
                        best_idx = idx;
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    (out, argmax, out_shape)
}

pub fn maxpool2x2_backward<F: Real>(grad_out: &[F], argmax: &[usize], grad_input: &mut [F]) {
    for (&g, &idx) in grad_out.iter().zip(argmax) {
        grad_input[idx] = grad_input[idx] + g;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out][in]`
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
}

impl<F: Real> Linear<F> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            inputs,
            outputs,
            weight: Tensor::he_uniform(&[outputs, inputs], inputs, rng),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn forward(&self, x: &[F]) -> Vec<F> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weight.data[o * self.inputs..(o + 1) * self.inputs];
                let mut acc = self.bias.data[o];
                for (&w, &v) in row.iter().zip(x) {
                    acc = acc + w * v;
                }
                acc
            })
            .collect()
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. `x`.
    pub fn backward(&self, x: &[F], grad_out: &[F], grad: &mut Self) -> Vec<F> {
        let mut gx = vec![F::zero(); self.inputs];
        for (o, &g) in grad_out.iter().enumerate() {
            grad.bias.data[o] = grad.bias.data[o] + g;
            if g == F::zero() {
                continue;
            }
            let row = &self.weight.data[o * self.inputs..(o + 1) * self.inputs];
            let grow = &mut grad.weight.data[o * self.inputs..(o + 1) * self.inputs];
            for ((gw, &v), (d, &w)) in grow.iter_mut().zip(x).zip(gx.iter_mut().zip(row)) {
                *gw = *gw + g * v;
                *d = *d + g * w;
            }
        }
        gx
    }
}

pub fn relu_inplace<F: Real>(x: &mut [F]) {
    x.iter_mut().for_each(|v| {
        if *v < F::zero() {
            *v = F::zero()
        }
    });
}

/// Zeroes `grad` where the post-activation output was not positive.
pub fn relu_backward<F: Real>(activated: &[F], grad: &mut [F]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= F::zero() {
            *g = F::zero();
        }
    }
}

pub const LEAKY_SLOPE: f64 = 0.01;

pub fn leaky_relu_inplace<F: Real>(x: &mut [F]) {
    let slope = F::of(LEAKY_SLOPE);
    x.iter_mut().for_each(|v| {
        if *v < F::zero() {
            *v = *v * slope
        }
    });
}

pub fn leaky_relu_backward<F: Real>(pre: &[F], grad: &mut [F]) {
    let slope = F::of(LEAKY_SLOPE);
    for (g, &p) in grad.iter_mut().zip(pre) {
        if p < F::zero() {
            *g = *g * slope;
        }
    }
}

/// Numerically stable softmax.
pub fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-log softmax(logits)[label]`, computed without forming the probabilities.
pub fn log_softmax_nll<F: Real>(logits: &[F], label: usize) -> F {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let lse = logits
        .iter()
        .map(|&z| (z - max).exp())
        .sum::<F>()
        .ln()
        + max;
    lse - logits[label]
}

/// Named parameter tensors of a network, in a fixed order. The same order
/// is used by the optimizer state and by the checkpoint shape index.
pub trait ParamSet<F: Real> {
    fn tensors(&self) -> Vec<(String, &Tensor<F>)>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<F>)>;

    fn zero_grad(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.fill_zero();
        }
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.data.iter())
            .map(|v| v.f64() * v.f64())
            .sum()
    }

    /// Overwrites every tensor from `(name, shape, data)` triples; names and
    /// shapes must match this network's layout exactly.
    fn assign_tensors(&mut self, source: &[(String, Vec<usize>, Vec<F>)]) -> crate::Result<()> {
        let mut targets = self.tensors_mut();
        if targets.len() != source.len() {
            return Err(crate::Error::Shape(alloc::format!(
                "expected {} parameter tensors, found {}",
                targets.len(),
                source.len()
            )));
        }
        for ((name, t), (src_name, shape, data)) in targets.iter_mut().zip(source) {
            if name != src_name || &t.shape != shape || data.len() != t.len() {
                return Err(crate::Error::Shape(alloc::format!(
                    "tensor {src_name} {shape:?} does not fit {name} {:?}",
                    t.shape
                )));
            }
            t.data.copy_from_slice(data);
        }
        Ok(())
    }
}
