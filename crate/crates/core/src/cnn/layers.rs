//! Forward and backward kernels for every layer kind.
//!
//! Convolution lowers to a GEMM over an im2col buffer; pooling and LRN work
//! directly on channel planes.

use super::volume::Volume;
use crate::error::{Error, Result};

/// Geometry of a valid (unpadded) convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.patch_len()
    }

    pub fn output_dims(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        if self.stride == 0 || self.kernel_h == 0 || self.kernel_w == 0 {
            return Err(Error::Shape("zero kernel or stride".into()));
        }
        if self.kernel_h > height || self.kernel_w > width {
            return Err(Error::Shape(format!(
                "{}x{} kernel exceeds {height}x{width} input",
                self.kernel_h, self.kernel_w
            )));
        }
        Ok((
            (height - self.kernel_h) / self.stride + 1,
            (width - self.kernel_w) / self.stride + 1,
        ))
    }
}

/// Im2col: rows are (c, ky, kx), columns are output positions.
fn im2col(input: &Volume, g: &ConvGeometry, oh: usize, ow: usize) -> Vec<f64> {
    let p = oh * ow;
    let mut cols = vec![0.0; g.patch_len() * p];
    let mut row = 0;
    for c in 0..g.in_channels {
        let plane = input.plane(c);
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let src = (oy * g.stride + ky) * input.width + kx;
                    for ox in 0..ow {
                        dst[oy * ow + ox] = plane[src + ox * g.stride];
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], g: &ConvGeometry, oh: usize, ow: usize, out: &mut Volume) {
    let p = oh * ow;
    let (w, hw) = (out.width, out.width * out.height);
    let mut row = 0;
    for c in 0..g.in_channels {
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let base = c * hw + (oy * g.stride + ky) * w + kx;
                    for ox in 0..ow {
                        out.data[base + ox * g.stride] += src[oy * ow + ox];
                    }
                }
                row += 1;
            }
        }
    }
}

/// `c = a · b` (+ `c` if `accumulate`), all row-major.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], accumulate: bool) {
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: slices are sized m×k, k×n and m×n for the given strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn check_conv(input: &Volume, weights: &[f64], bias: &[f64], g: &ConvGeometry) -> Result<(usize, usize)> {
    if input.channels != g.in_channels {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {}",
            g.in_channels, input.channels
        )));
    }
    if weights.len() != g.weight_len() || bias.len() != g.out_channels {
        return Err(Error::Shape(format!(
            "conv parameters: {} weights / {} biases for {:?}",
            weights.len(),
            bias.len(),
            g
        )));
    }
    g.output_dims(input.height, input.width)
}

/// Valid convolution (cross-correlation) plus bias; no nonlinearity.
/// Weights are laid out `[out][in][ky][kx]`.
pub fn conv_forward(input: &Volume, weights: &[f64], bias: &[f64], g: &ConvGeometry) -> Result<Volume> {
    let (oh, ow) = check_conv(input, weights, bias, g)?;
    let p = oh * ow;
    let cols = im2col(input, g, oh, ow);
    let mut out = vec![0.0; g.out_channels * p];
    for (o, chunk) in out.chunks_exact_mut(p).enumerate() {
        chunk.fill(bias[o]);
    }
    gemm(g.out_channels, g.patch_len(), p, weights, false, &cols, false, &mut out, true);
    Volume::from_vec(g.out_channels, oh, ow, out)
}

/// Accumulates weight and bias gradients; returns the input gradient.
pub fn conv_backward(
    input: &Volume,
    weights: &[f64],
    g: &ConvGeometry,
    grad_out: &Volume,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) -> Volume {
    let (oh, ow) = (grad_out.height, grad_out.width);
    let p = oh * ow;
    let k = g.patch_len();
    let cols = im2col(input, g, oh, ow);
    gemm(g.out_channels, p, k, &grad_out.data, false, &cols, true, grad_w, true);
    for (o, chunk) in grad_out.data.chunks_exact(p).enumerate() {
        grad_b[o] += chunk.iter().sum::<f64>();
    }
    let mut dcols = vec![0.0; k * p];
    gemm(k, g.out_channels, p, weights, true, &grad_out.data, false, &mut dcols, false);
    let mut grad_in = Volume::zeros(input.channels, input.height, input.width);
    col2im(&dcols, g, oh, ow, &mut grad_in);
    grad_in
}

/// Pooled extent with ceil rounding: the last window may hang over the
/// border and is clipped, but it always starts inside the input.
pub fn pool_output_dim(input: usize, window: usize, stride: usize) -> Result<usize> {
    if window == 0 || stride == 0 {
        return Err(Error::Shape("zero pooling window or stride".into()));
    }
    if window > input {
        return Err(Error::Shape(format!("pool window {window} exceeds input {input}")));
    }
    let mut out = (input - window).div_ceil(stride) + 1;
    if (out - 1) * stride >= input {
        out -= 1;
    }
    Ok(out)
}

/// Max pooling per channel. Also returns the flat input index of each
/// output's maximum; ties resolve to the first in row-major order.
pub fn maxpool_forward(input: &Volume, window: usize, stride: usize) -> Result<(Volume, Vec<usize>)> {
    let oh = pool_output_dim(input.height, window, stride)?;
    let ow = pool_output_dim(input.width, window, stride)?;
    let mut out = Vec::with_capacity(input.channels * oh * ow);
    let mut argmax = Vec::with_capacity(out.capacity());
    let hw = input.height * input.width;
    for c in 0..input.channels {
        let plane = input.plane(c);
        for oy in 0..oh {
            let y0 = oy * stride;
            let y1 = (y0 + window).min(input.height);
            for ox in 0..ow {
                let x0 = ox * stride;
                let x1 = (x0 + window).min(input.width);
                let mut best = (f64::NEG_INFINITY, 0);
                for y in y0..y1 {
                    for x in x0..x1 {
                        let v = plane[y * input.width + x];
                        if v > best.0 {
                            best = (v, y * input.width + x);
                        }
                    }
                }
                out.push(best.0);
                argmax.push(c * hw + best.1);
            }
        }
    }
    Ok((Volume::from_vec(input.channels, oh, ow, out)?, argmax))
}

pub fn maxpool_backward(input_shape: super::Shape, argmax: &[usize], grad_out: &Volume) -> Volume {
    let mut grad = Volume::zeros(input_shape.channels, input_shape.height, input_shape.width);
    for (&i, &g) in argmax.iter().zip(&grad_out.data) {
        grad.data[i] += g;
    }
    grad
}

pub fn relu(input: &Volume) -> Volume {
    Volume {
        channels: input.channels,
        height: input.height,
        width: input.width,
        data: input.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// Passes the gradient where the forward input was positive.
pub fn relu_backward(input: &Volume, grad_out: &Volume) -> Volume {
    Volume {
        channels: input.channels,
        height: input.height,
        width: input.width,
        data: input
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrnParams {
    pub size: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl LrnParams {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("LRN size must be odd, got {}", self.size)));
        }
        if !(self.alpha >= 0.0) || !(self.beta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "LRN needs alpha >= 0 and beta > 0, got {} / {}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Sum of squares over the N×N window around each pixel, clamped to the plane.
fn window_square_sums(plane: &[f64], h: usize, w: usize, half: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(half), (y + half).min(h - 1));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(half), (x + half).min(w - 1));
            let mut acc = 0.0;
            for yy in y0..=y1 {
                for v in &plane[yy * w + x0..=yy * w + x1] {
                    acc += v * v;
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Within-channel local response normalization:
/// `u / (1 + α/N² · Σ_{N×N window} u²)^β`.
///
/// Returns the output and the per-element denominator base (the term
/// raised to β), needed for the backward pass.
pub fn lrn_forward(input: &Volume, p: &LrnParams) -> Result<(Volume, Vec<f64>)> {
    p.validate()?;
    let (h, w) = (input.height, input.width);
    let k = p.alpha / (p.size * p.size) as f64;
    let mut scale = Vec::with_capacity(input.data.len());
    for c in 0..input.channels {
        let sums = window_square_sums(input.plane(c), h, w, p.size / 2);
        scale.extend(sums.into_iter().map(|s| 1.0 + k * s));
    }
    let data = input
        .data
        .iter()
        .zip(&scale)
        .map(|(&u, &s)| u * s.powf(-p.beta))
        .collect();
    Ok((Volume::from_vec(input.channels, h, w, data)?, scale))
}

pub fn lrn_backward(input: &Volume, scale: &[f64], p: &LrnParams, grad_out: &Volume) -> Volume {
    let (h, w) = (input.height, input.width);
    let k = p.alpha / (p.size * p.size) as f64;
    let half = p.size / 2;
    let hw = h * w;
    let mut grad = Volume::zeros(input.channels, h, w);
    for c in 0..input.channels {
        let off = c * hw;
        // t_p = g_p · u_p · s_p^(-β-1); windows are symmetric, so the cross
        // term at q is a window sum of t around q
        let t: Vec<f64> = (0..hw)
            .map(|i| grad_out.data[off + i] * input.data[off + i] * scale[off + i].powf(-p.beta - 1.0))
            .collect();
        for y in 0..h {
            let (y0, y1) = (y.saturating_sub(half), (y + half).min(h - 1));
            for x in 0..w {
                let (x0, x1) = (x.saturating_sub(half), (x + half).min(w - 1));
                let mut acc = 0.0;
                for yy in y0..=y1 {
                    acc += t[yy * w + x0..=yy * w + x1].iter().sum::<f64>();
                }
                let i = off + y * w + x;
                grad.data[i] = grad_out.data[i] * scale[i].powf(-p.beta) - 2.0 * k * p.beta * input.data[i] * acc;
            }
        }
    }
    grad
}

/// Fully connected layer over the flattened input; weights are `[out][in]`.
pub fn inner_product_forward(input: &Volume, weights: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    let n_in = input.data.len();
    let n_out = bias.len();
    if weights.len() != n_in * n_out {
        return Err(Error::Shape(format!(
            "inner product: {} weights for {n_in} inputs x {n_out} outputs",
            weights.len()
        )));
    }
    Ok(weights
        .chunks_exact(n_in)
        .zip(bias)
        .map(|(row, b)| b + row.iter().zip(&input.data).map(|(w, x)| w * x).sum::<f64>())
        .collect())
}

pub fn inner_product_backward(
    input: &Volume,
    weights: &[f64],
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) -> Volume {
    let n_in = input.data.len();
    let mut grad_in = vec![0.0; n_in];
    for (o, &g) in grad_out.iter().enumerate() {
        grad_b[o] += g;
        let row = &weights[o * n_in..(o + 1) * n_in];
        let grow = &mut grad_w[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            grow[i] += g * input.data[i];
            grad_in[i] += g * row[i];
        }
    }
    Volume {
        channels: input.channels,
        height: input.height,
        width: input.width,
        data: grad_in,
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of `probs` against a class index.
pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(f64::MIN_POSITIVE).ln()
}
