//! Layer kernels: 3x3 same-padded convolution, 2x2 max pooling, dense
//! products, rectifier and softmax, each with its hand-written backward pass.
//!
//! The batched kernels work on flat row-major slices laid out as
//! `[batch, channels, height, width]` (or `[batch, features]`). The
//! single-image functions at the bottom wrap them with shape checks.

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// Spatial geometry of a `[C, H, W]` feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapDims {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl MapDims {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.channels * self.plane()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Unfold one `[C, H, W]` image into `[C*9, H*W]` patch columns (zero padding 1).
pub fn im2col3x3<T: Real>(image: &[T], dims: MapDims, cols: &mut [T]) {
    let (h, w) = (dims.height, dims.width);
    let hw = dims.plane();
    debug_assert_eq!(cols.len(), dims.channels * 9 * hw);
    for c in 0..dims.channels {
        let plane = &image[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(c * 9 + ky * 3 + kx) * hw..(c * 9 + ky * 3 + kx + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::ZERO);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::ZERO;
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::ZERO;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col3x3`]: scatter-add patch columns back into an image.
pub fn col2im3x3<T: Real>(cols: &[T], dims: MapDims, image: &mut [T]) {
    let (h, w) = (dims.height, dims.width);
    let hw = dims.plane();
    for c in 0..dims.channels {
        let plane = &mut image[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(c * 9 + ky * 3 + kx) * hw..(c * 9 + ky * 3 + kx + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, &s)| *d += s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, &s)| *d += s),
                    }
                }
            }
        }
    }
}

/// Batched same-padded 3x3 convolution. `kernels` is `[C_out, C_in, 3, 3]`.
pub fn conv3x3_forward<T: Real>(
    input: &[T],
    batch: usize,
    dims: MapDims,
    kernels: &[T],
    bias: &[T],
    output: &mut [T],
) {
    let c_out = bias.len();
    let hw = dims.plane();
    let patch = dims.channels * 9;
    let mut cols = vec![T::ZERO; patch * hw];
    for b in 0..batch {
        im2col3x3(&input[b * dims.len()..(b + 1) * dims.len()], dims, &mut cols);
        let out = &mut output[b * c_out * hw..(b + 1) * c_out * hw];
        for (c, plane) in out.chunks_mut(hw).enumerate() {
            plane.fill(bias[c]);
        }
        T::gemm(
            c_out,
            patch,
            hw,
            T::ONE,
            kernels,
            (patch, 1),
            &cols,
            (hw, 1),
            T::ONE,
            out,
            (hw, 1),
        );
    }
}

/// Backward pass of [`conv3x3_forward`]. Kernel and bias gradients are
/// accumulated into `grad_kernels` / `grad_bias`; the input gradient is
/// written only when `grad_input` is given.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward<T: Real>(
    input: &[T],
    batch: usize,
    dims: MapDims,
    kernels: &[T],
    grad_output: &[T],
    grad_kernels: &mut [T],
    grad_bias: &mut [T],
    mut grad_input: Option<&mut [T]>,
) {
    let c_out = grad_bias.len();
    let hw = dims.plane();
    let patch = dims.channels * 9;
    let mut cols = vec![T::ZERO; patch * hw];
    let mut grad_cols = vec![T::ZERO; patch * hw];
    if let Some(gi) = grad_input.as_deref_mut() {
        gi.fill(T::ZERO);
    }
    for b in 0..batch {
        let go = &grad_output[b * c_out * hw..(b + 1) * c_out * hw];
        for (c, plane) in go.chunks(hw).enumerate() {
            grad_bias[c] += plane.iter().copied().sum::<T>();
        }
        im2col3x3(&input[b * dims.len()..(b + 1) * dims.len()], dims, &mut cols);
        // dK[C_out, patch] += dOut[C_out, HW] * cols^T[HW, patch]
        T::gemm(
            c_out,
            hw,
            patch,
            T::ONE,
            go,
            (hw, 1),
            &cols,
            (1, hw),
            T::ONE,
            grad_kernels,
            (patch, 1),
        );
        if let Some(gi) = grad_input.as_deref_mut() {
            // dCols[patch, HW] = K^T[patch, C_out] * dOut[C_out, HW]
            T::gemm(
                patch,
                c_out,
                hw,
                T::ONE,
                kernels,
                (1, patch),
                go,
                (hw, 1),
                T::ZERO,
                &mut grad_cols,
                (hw, 1),
            );
            col2im3x3(
                &grad_cols,
                dims,
                &mut gi[b * dims.len()..(b + 1) * dims.len()],
            );
        }
    }
}

/// Batched non-overlapping 2x2 max pooling. Returns, per output cell, the
/// flat input index that supplied the maximum (first in row-major order on ties).
pub fn maxpool2_forward<T: Real>(
    input: &[T],
    batch: usize,
    dims: MapDims,
    output: &mut [T],
) -> Vec<u32> {
    let (h, w) = (dims.height, dims.width);
    let (oh, ow) = (h / 2, w / 2);
    let mut argmax = Vec::with_capacity(batch * dims.channels * oh * ow);
    let mut o = 0;
    for plane_idx in 0..batch * dims.channels {
        let base = plane_idx * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let mut best = base + 2 * y * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * x + dx;
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                output[o] = input[best];
                argmax.push(best as u32);
                o += 1;
            }
        }
    }
    argmax
}

pub fn maxpool2_backward<T: Real>(grad_output: &[T], argmax: &[u32], grad_input: &mut [T]) {
    grad_input.fill(T::ZERO);
    for (&g, &idx) in grad_output.iter().zip(argmax) {
        grad_input[idx as usize] += g;
    }
}

/// `output[B, out] = input[B, in] * weights[out, in]^T + bias`
pub fn dense_forward<T: Real>(
    input: &[T],
    batch: usize,
    weights: &[T],
    bias: &[T],
    output: &mut [T],
) {
    let n_out = bias.len();
    let n_in = weights.len() / n_out;
    for row in output.chunks_mut(n_out) {
        row.copy_from_slice(bias);
    }
    T::gemm(
        batch,
        n_in,
        n_out,
        T::ONE,
        input,
        (n_in, 1),
        weights,
        (1, n_in),
        T::ONE,
        output,
        (n_out, 1),
    );
}

pub fn dense_backward<T: Real>(
    input: &[T],
    batch: usize,
    weights: &[T],
    grad_output: &[T],
    grad_weights: &mut [T],
    grad_bias: &mut [T],
    grad_input: Option<&mut [T]>,
) {
    let n_out = grad_bias.len();
    let n_in = weights.len() / n_out;
    for row in grad_output.chunks(n_out) {
        for (gb, &g) in grad_bias.iter_mut().zip(row) {
            *gb += g;
        }
    }
    // dW[out, in] += dY^T[out, B] * X[B, in]
    T::gemm(
        n_out,
        batch,
        n_in,
        T::ONE,
        grad_output,
        (1, n_out),
        input,
        (n_in, 1),
        T::ONE,
        grad_weights,
        (n_in, 1),
    );
    if let Some(gi) = grad_input {
        // dX[B, in] = dY[B, out] * W[out, in]
        T::gemm(
            batch,
            n_out,
            n_in,
            T::ONE,
            grad_output,
            (n_out, 1),
            weights,
            (n_in, 1),
            T::ZERO,
            gi,
            (n_in, 1),
        );
    }
}

pub fn relu_inplace<T: Real>(values: &mut [T]) {
    for v in values {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
}

/// Gradient through a rectifier given its (post-activation) output.
pub fn relu_backward_inplace<T: Real>(output: &[T], grad: &mut [T]) {
    for (g, &y) in grad.iter_mut().zip(output) {
        if y <= T::ZERO {
            *g = T::ZERO;
        }
    }
}

/// Numerically stable softmax of one row, written into `out`.
pub fn softmax_into<T: Real>(logits: &[T], out: &mut [T]) {
    let max = logits.iter().copied().fold(logits[0], T::max);
    let mut sum = T::ZERO;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Mean cross-entropy over a batch of logit rows, together with its
/// gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Real>(logits: &[T], labels: &[usize], grad: &mut [T]) -> f64 {
    let batch = labels.len();
    let classes = logits.len() / batch;
    let scale = T::from_f64(1.0 / batch as f64);
    let mut loss = 0.0;
    for ((row, g), &label) in logits
        .chunks(classes)
        .zip(grad.chunks_mut(classes))
        .zip(labels)
    {
        softmax_into(row, g);
        loss -= g[label].to_f64().max(f64::MIN_POSITIVE).ln();
        g[label] -= T::ONE;
        for v in g.iter_mut() {
            *v *= scale;
        }
    }
    loss / batch as f64
}

fn map_dims_of<T: Real>(t: &Tensor<T>, what: &str) -> Result<MapDims> {
    match *t.shape() {
        [c, h, w] => Ok(MapDims::new(c, h, w)),
        ref s => Err(Error::shape(format!("{what} must be [C, H, W], got {s:?}"))),
    }
}

fn ensure_finite<T: Real>(t: &Tensor<T>, what: &str) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} contains non-finite values")))
    }
}

/// Same-padded, stride-1 3x3 convolution of one `[C_in, H, W]` image.
pub fn conv2d<T: Real>(input: &Tensor<T>, kernels: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let dims = map_dims_of(input, "conv2d input")?;
    let [c_out, c_in, kh, kw] = *kernels.shape() else {
        return Err(Error::shape(format!(
            "conv2d kernels must be [C_out, C_in, 3, 3], got {:?}",
            kernels.shape()
        )));
    };
    if (kh, kw) != (3, 3) {
        return Err(Error::shape(format!("conv2d kernels must be 3x3, got {kh}x{kw}")));
    }
    if c_in != dims.channels {
        return Err(Error::shape(format!(
            "conv2d input has {} channels but kernels expect {c_in}",
            dims.channels
        )));
    }
    if bias.shape() != [c_out] {
        return Err(Error::shape(format!(
            "conv2d bias must be [{c_out}], got {:?}",
            bias.shape()
        )));
    }
    ensure_finite(input, "conv2d input")?;
    let mut out = Tensor::zeros(&[c_out, dims.height, dims.width]);
    conv3x3_forward(
        input.as_slice(),
        1,
        dims,
        kernels.as_slice(),
        bias.as_slice(),
        out.as_mut_slice(),
    );
    Ok(out)
}

/// 2x2 max pooling of one `[C, H, W]` map with even spatial extents.
pub fn maxpool2<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let dims = map_dims_of(input, "maxpool2 input")?;
    if dims.height % 2 != 0 || dims.width % 2 != 0 {
        return Err(Error::shape(format!(
            "maxpool2 needs even spatial dims, got {}x{}",
            dims.height, dims.width
        )));
    }
    let mut out = Tensor::zeros(&[dims.channels, dims.height / 2, dims.width / 2]);
    let argmax = maxpool2_forward(input.as_slice(), 1, dims, out.as_mut_slice());
    Ok((out, argmax))
}

/// Softmax of a logit vector.
pub fn softmax<T: Real>(logits: &[T]) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("softmax of non-finite logits"));
    }
    let mut out = vec![T::ZERO; logits.len()];
    softmax_into(logits, &mut out);
    Ok(out)
}
