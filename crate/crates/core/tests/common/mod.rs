#![allow(dead_code)]

use episodic_al::data::LabeledImage;
use episodic_al::network::forward::{self, DropoutMode};
use episodic_al::network::{Architecture, NetworkSnapshot};
use episodic_al::numerics::ops;
use episodic_al::numerics::{MapDims, RngStream, Tensor};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

pub fn normals(rng: &mut RngStream, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_grad(x: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + FD_STEP;
            let up = f(x);
            x[i] = orig - FD_STEP;
            let down = f(x);
            x[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Worst relative error over input, kernel and bias gradients of a random
/// batched convolution under the loss `Σ w ⊙ conv(x)`.
pub fn conv_gradient_error(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, 1);
    let batch = rng.random_range(1..=2);
    let dims = MapDims::new(rng.random_range(1..=3), rng.random_range(2..=5), rng.random_range(2..=5));
    let c_out = rng.random_range(1..=3);
    let mut input = normals(&mut rng, batch * dims.len());
    let mut kernels = normals(&mut rng, c_out * dims.channels * 9);
    let mut bias = normals(&mut rng, c_out);
    let weights = normals(&mut rng, batch * c_out * dims.plane());

    let loss = |x: &[f64], k: &[f64], b: &[f64]| {
        let mut out = vec![0.0; weights.len()];
        ops::conv3x3_forward(x, batch, dims, k, b, &mut out);
        dot(&out, &weights)
    };
    let mut gk = vec![0.0; kernels.len()];
    let mut gb = vec![0.0; bias.len()];
    let mut gi = vec![0.0; input.len()];
    ops::conv3x3_backward(&input, batch, dims, &kernels, &weights, &mut gk, &mut gb, Some(&mut gi));

    let (k0, b0) = (kernels.clone(), bias.clone());
    let ni = numeric_grad(&mut input, |x| loss(x, &k0, &b0));
    let x0 = input.clone();
    let nk = numeric_grad(&mut kernels, |k| loss(&x0, k, &b0));
    let nb = numeric_grad(&mut bias, |b| loss(&x0, &k0, b));
    rel_error(&gi, &ni).max(rel_error(&gk, &nk)).max(rel_error(&gb, &nb))
}

pub fn pool_gradient_error(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, 2);
    let batch = rng.random_range(1..=2);
    let dims = MapDims::new(rng.random_range(1..=3), 2 * rng.random_range(1..=3), 2 * rng.random_range(1..=3));
    let mut input = normals(&mut rng, batch * dims.len());
    let out_len = batch * dims.channels * (dims.height / 2) * (dims.width / 2);
    let weights = normals(&mut rng, out_len);

    let loss = |x: &[f64]| {
        let mut out = vec![0.0; out_len];
        ops::maxpool2_forward(x, batch, dims, &mut out);
        dot(&out, &weights)
    };
    let mut out = vec![0.0; out_len];
    let argmax = ops::maxpool2_forward(&input, batch, dims, &mut out);
    let mut gi = vec![0.0; input.len()];
    ops::maxpool2_backward(&weights, &argmax, &mut gi);
    let ni = numeric_grad(&mut input, loss);
    rel_error(&gi, &ni)
}

pub fn dense_gradient_error(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, 3);
    let batch = rng.random_range(1..=4);
    let (n_in, n_out) = (rng.random_range(1..=8), rng.random_range(1..=6));
    let mut input = normals(&mut rng, batch * n_in);
    let mut w = normals(&mut rng, n_out * n_in);
    let mut bias = normals(&mut rng, n_out);
    let upstream = normals(&mut rng, batch * n_out);

    let loss = |x: &[f64], w: &[f64], b: &[f64]| {
        let mut out = vec![0.0; batch * n_out];
        ops::dense_forward(x, batch, w, b, &mut out);
        dot(&out, &upstream)
    };
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; n_out];
    let mut gi = vec![0.0; input.len()];
    ops::dense_backward(&input, batch, &w, &upstream, &mut gw, &mut gb, Some(&mut gi));

    let (w0, b0) = (w.clone(), bias.clone());
    let ni = numeric_grad(&mut input, |x| loss(x, &w0, &b0));
    let x0 = input.clone();
    let nw = numeric_grad(&mut w, |w| loss(&x0, w, &b0));
    let nb = numeric_grad(&mut bias, |b| loss(&x0, &w0, b));
    rel_error(&gi, &ni).max(rel_error(&gw, &nw)).max(rel_error(&gb, &nb))
}

pub fn softmax_ce_gradient_error(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, 4);
    let batch = rng.random_range(1..=4);
    let classes = rng.random_range(2..=10);
    let mut logits: Vec<f64> = normals(&mut rng, batch * classes).iter().map(|z| 3.0 * z).collect();
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    let mut grad = vec![0.0; logits.len()];
    ops::softmax_cross_entropy(&logits, &labels, &mut grad);
    let mut scratch = vec![0.0; logits.len()];
    let numeric = numeric_grad(&mut logits, |z| ops::softmax_cross_entropy(z, &labels, &mut scratch));
    rel_error(&grad, &numeric)
}

/// Cross-entropy of a network on a batch with fixed per-row dropout streams.
fn network_loss(net: &NetworkSnapshot<f64>, input: &[f64], labels: &[usize], streams: &[RngStream]) -> f64 {
    let mut s = streams.to_vec();
    let logits = forward::forward(net, input, labels.len(), DropoutMode::Sampled(&mut s));
    let mut g = vec![0.0; logits.len()];
    ops::softmax_cross_entropy(&logits, labels, &mut g)
}

/// Parameter and input gradients of a whole network against finite
/// differences. Cloned dropout streams replay identical masks, so dropout
/// acts as a fixed mask during the check.
///
/// Biases are randomized first: with zero biases a fully dropped input row
/// puts pre-activations exactly on the rectifier kink, where central
/// differences measure half the slope.
pub fn network_gradient_error(net: &NetworkSnapshot<f64>, seed: u64, batch: usize) -> f64 {
    let arch = net.architecture().clone();
    let mut rng = RngStream::new(seed, 5);
    let mut net = net.clone();
    for p in net.params_mut().iter_mut().filter(|p| p.shape().len() == 1) {
        let values = normals(&mut rng, p.len());
        p.as_mut_slice().iter_mut().zip(values).for_each(|(v, z)| *v = 0.1 * z);
    }
    let net = &net;
    let mut input = normals(&mut rng, batch * arch.input_len());
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..arch.num_classes())).collect();
    let streams: Vec<RngStream> = (0..batch as u64).map(|r| RngStream::new(seed, 100 + r)).collect();

    let mut s = streams.clone();
    let (logits, trace) = forward::forward_traced(net, &input, batch, DropoutMode::Sampled(&mut s));
    let mut g = vec![0.0; logits.len()];
    ops::softmax_cross_entropy(&logits, &labels, &mut g);
    let (grads, grad_input) = forward::backward(net, &trace, &g);

    let mut worst = 0.0f64;
    for (p, analytic) in grads.iter().enumerate() {
        let mut values = net.params()[p].as_slice().to_vec();
        let numeric = numeric_grad(&mut values, |v| {
            let mut probe = net.clone();
            probe.params_mut()[p] = Tensor::new(analytic.shape().to_vec(), v.to_vec()).unwrap();
            network_loss(&probe, &input, &labels, &streams)
        });
        worst = worst.max(rel_error(analytic.as_slice(), &numeric));
    }
    let numeric = numeric_grad(&mut input, |x| network_loss(net, x, &labels, &streams));
    worst.max(rel_error(&grad_input, &numeric))
}

/// Dense network with dropout between hidden layers; the check exercises
/// the dropout backward pass with the masks drawn in the forward pass.
pub fn dropout_gradient_error(seed: u64) -> f64 {
    let arch = Architecture::mlp(6, &[7, 5], 4, 0.5).unwrap();
    let net = NetworkSnapshot::<f64>::build(arch, seed);
    network_gradient_error(&net, seed, 3)
}

pub fn tiny_conv_arch(dropout_rate: f64) -> Architecture {
    Architecture::conv_net([2, 8, 8], [2, 3, 3, 2], 5, 3, dropout_rate).unwrap()
}

pub fn conv_network_gradient_error(seed: u64) -> f64 {
    let net = NetworkSnapshot::<f64>::build(tiny_conv_arch(0.3), seed);
    network_gradient_error(&net, seed, 2)
}

/// Flat 2-class images separable by the sign of their first coordinate.
pub fn flat_toy(n: usize, dim: usize, seed: u64) -> Vec<LabeledImage> {
    let mut rng = RngStream::new(seed, 6);
    (0..n)
        .map(|i| {
            let label = (i % 2) as u8;
            let mut v: Vec<f32> = (0..dim).map(|_| rng.random::<f32>()).collect();
            v[0] = if label == 1 { 0.6 + 0.4 * v[0] } else { 0.4 * v[0] };
            LabeledImage {
                pixels: Tensor::new(vec![dim], v).unwrap(),
                label,
            }
        })
        .collect()
}
