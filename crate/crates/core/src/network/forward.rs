//! Batched forward and backward passes over a [`NetworkSnapshot`].

use crate::network::arch::{ActShape, Layer};
use crate::network::NetworkSnapshot;
use crate::numerics::ops;
use crate::numerics::{Real, RngStream, Tensor};

/// How dropout sites behave during a forward pass.
pub enum DropoutMode<'a> {
    /// Identity at every site (deterministic inference).
    Off,
    /// One random stream per batch row; each row draws its masks from its
    /// own stream in layer order, so a row's masks do not depend on the rest
    /// of the batch.
    Sampled(&'a mut [RngStream]),
}

/// Everything the backward pass needs from a forward pass.
pub struct Trace<T> {
    batch: usize,
    acts: Vec<Vec<T>>,
    masks: Vec<Option<Vec<T>>>,
    argmax: Vec<Option<Vec<u32>>>,
}

impl<T: Real> Trace<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// The dropout mask applied at layer `i` (values are 0 or 1/(1-p)).
    pub fn mask(&self, layer: usize) -> Option<&[T]> {
        self.masks.get(layer).and_then(|m| m.as_deref())
    }
}

/// Keep/scale factors for one row: each unit is dropped with probability
/// `rate`, resolved to 1/65536 (exact for 0.5).
fn fill_mask<T: Real>(rng: &mut RngStream, rate: f64, row: &mut [T]) {
    let threshold = (rate * 65536.0).round() as u32;
    let scale = T::from_f64(1.0 / (1.0 - rate));
    for chunk in row.chunks_mut(4) {
        let bits = rand::RngCore::next_u64(rng);
        for (j, v) in chunk.iter_mut().enumerate() {
            let u = ((bits >> (16 * j)) & 0xFFFF) as u32;
            *v = if u < threshold { T::ZERO } else { scale };
        }
    }
}

fn run<T: Real>(
    net: &NetworkSnapshot<T>,
    input: &[T],
    batch: usize,
    mut dropout: DropoutMode<'_>,
    keep: bool,
) -> (Vec<T>, Option<Trace<T>>) {
    let arch = net.architecture();
    let shapes = arch.activation_shapes().expect("validated architecture");
    assert_eq!(input.len(), batch * shapes[0].len(), "input batch size mismatch");
    if let DropoutMode::Sampled(streams) = &dropout {
        assert_eq!(streams.len(), batch, "one dropout stream per row");
    }
    let rate = arch.dropout_rate();
    let params = net.params();
    let mut p = 0;
    let mut cur = input.to_vec();
    let mut trace = keep.then(|| Trace {
        batch,
        acts: Vec::with_capacity(arch.layers().len() + 1),
        masks: Vec::new(),
        argmax: Vec::new(),
    });
    for (i, layer) in arch.layers().iter().enumerate() {
        let in_shape = shapes[i];
        let out_len = shapes[i + 1].len();
        let mut mask = None;
        let mut argmax = None;
        let next = match (*layer, in_shape) {
            (Layer::Conv3x3 { .. }, ActShape::Map(dims)) => {
                let mut out = vec![T::ZERO; batch * out_len];
                ops::conv3x3_forward(
                    &cur,
                    batch,
                    dims,
                    params[p].as_slice(),
                    params[p + 1].as_slice(),
                    &mut out,
                );
                p += 2;
                Some(out)
            }
            (Layer::Dense { .. }, ActShape::Flat(_)) => {
                let mut out = vec![T::ZERO; batch * out_len];
                ops::dense_forward(
                    &cur,
                    batch,
                    params[p].as_slice(),
                    params[p + 1].as_slice(),
                    &mut out,
                );
                p += 2;
                Some(out)
            }
            (Layer::MaxPool2, ActShape::Map(dims)) => {
                let mut out = vec![T::ZERO; batch * out_len];
                argmax = Some(ops::maxpool2_forward(&cur, batch, dims, &mut out));
                Some(out)
            }
            (Layer::Relu, _) => {
                let mut out = if keep { cur.clone() } else { std::mem::take(&mut cur) };
                ops::relu_inplace(&mut out);
                Some(out)
            }
            (Layer::Dropout, _) => match &mut dropout {
                DropoutMode::Sampled(streams) if rate > 0.0 => {
                    let mut m = vec![T::ZERO; batch * out_len];
                    for (row, rng) in m.chunks_mut(out_len).zip(streams.iter_mut()) {
                        fill_mask(rng, rate, row);
                    }
                    let mut out = if keep { cur.clone() } else { std::mem::take(&mut cur) };
                    out.iter_mut().zip(&m).for_each(|(v, &k)| *v *= k);
                    mask = Some(m);
                    Some(out)
                }
                _ => None,
            },
            (Layer::Flatten, _) => None,
            _ => unreachable!("architecture validated"),
        };
        match next {
            Some(out) => {
                let prev = std::mem::replace(&mut cur, out);
                if let Some(t) = trace.as_mut() {
                    t.acts.push(prev);
                }
            }
            None => {
                if let Some(t) = trace.as_mut() {
                    t.acts.push(cur.clone());
                }
            }
        }
        if let Some(t) = trace.as_mut() {
            t.masks.push(mask);
            t.argmax.push(argmax);
        }
    }
    if let Some(t) = trace.as_mut() {
        t.acts.push(cur.clone());
    }
    (cur, trace)
}

/// Logits `[batch, classes]` without keeping intermediate activations.
pub fn forward<T: Real>(
    net: &NetworkSnapshot<T>,
    input: &[T],
    batch: usize,
    dropout: DropoutMode<'_>,
) -> Vec<T> {
    run(net, input, batch, dropout, false).0
}

/// Logits plus the trace needed for [`backward`].
pub fn forward_traced<T: Real>(
    net: &NetworkSnapshot<T>,
    input: &[T],
    batch: usize,
    dropout: DropoutMode<'_>,
) -> (Vec<T>, Trace<T>) {
    let (logits, trace) = run(net, input, batch, dropout, true);
    (logits, trace.expect("trace requested"))
}

/// Parameter gradients given the gradient of the loss w.r.t. the logits.
/// Returns `(param_grads, input_grad)`.
pub fn backward<T: Real>(
    net: &NetworkSnapshot<T>,
    trace: &Trace<T>,
    grad_logits: &[T],
) -> (Vec<Tensor<T>>, Vec<T>) {
    let arch = net.architecture();
    let shapes = arch.activation_shapes().expect("validated architecture");
    let params = net.params();
    let mut grads: Vec<Tensor<T>> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
    let batch = trace.batch;
    let mut p = params.len();
    let mut grad = grad_logits.to_vec();
    for (i, layer) in arch.layers().iter().enumerate().rev() {
        let input = &trace.acts[i];
        let in_len = shapes[i].len();
        match (*layer, shapes[i]) {
            (Layer::Conv3x3 { .. }, ActShape::Map(dims)) => {
                p -= 2;
                let mut gi = vec![T::ZERO; batch * in_len];
                let (gk, gb) = grads.split_at_mut(p + 1);
                ops::conv3x3_backward(
                    input,
                    batch,
                    dims,
                    params[p].as_slice(),
                    &grad,
                    gk[p].as_mut_slice(),
                    gb[0].as_mut_slice(),
                    Some(&mut gi),
                );
                grad = gi;
            }
            (Layer::Dense { .. }, ActShape::Flat(_)) => {
                p -= 2;
                let mut gi = vec![T::ZERO; batch * in_len];
                let (gw, gb) = grads.split_at_mut(p + 1);
                ops::dense_backward(
                    input,
                    batch,
                    params[p].as_slice(),
                    &grad,
                    gw[p].as_mut_slice(),
                    gb[0].as_mut_slice(),
                    Some(&mut gi),
                );
                grad = gi;
            }
            (Layer::MaxPool2, _) => {
                let mut gi = vec![T::ZERO; batch * in_len];
                let argmax = trace.argmax[i].as_ref().expect("pool argmax recorded");
                ops::maxpool2_backward(&grad, argmax, &mut gi);
                grad = gi;
            }
            (Layer::Relu, _) => ops::relu_backward_inplace(&trace.acts[i + 1], &mut grad),
            (Layer::Dropout, _) => {
                if let Some(mask) = &trace.masks[i] {
                    grad.iter_mut().zip(mask).for_each(|(g, &k)| *g *= k);
                }
            }
            (Layer::Flatten, _) => {}
            _ => unreachable!("architecture validated"),
        }
    }
    (grads, grad)
}

/// Per-row softmax of a logit matrix.
pub fn softmax_rows<T: Real>(logits: &[T], classes: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; logits.len()];
    for (row, o) in logits.chunks(classes).zip(out.chunks_mut(classes)) {
        ops::softmax_into(row, o);
    }
    out
}

/// Argmax with ties resolved to the lowest class index.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
