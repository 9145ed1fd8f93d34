//! MC-dropout predictive distributions and maximum-entropy acquisition.
//!
//! Each image is pushed through the network `passes` times with dropout
//! left on; the softmax outputs are averaged and the entropy of that mean
//! decides whether the image is worth a label.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledImage;
use crate::error::{Error, Result};
use crate::network::forward::{self, DropoutMode};
use crate::network::{gather_inputs, NetworkSnapshot};
use crate::numerics::{Real, RngStream};

const MC_STREAM: u64 = 0x3C0D;
/// Target number of forward rows per batched MC evaluation.
const ROWS_PER_BATCH: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EntropyUnit {
    #[default]
    Nats,
    Bits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    /// Stochastic forward passes per image.
    pub passes: usize,
    pub seed: u64,
    pub unit: EntropyUnit,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            passes: 64,
            seed: 0,
            unit: EntropyUnit::Nats,
        }
    }
}

impl McConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Entropy threshold `θ`; an image is acquired when `H > θ`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct AcquisitionThreshold(f64);

impl AcquisitionThreshold {
    pub const DEFAULT: f64 = 0.8;

    pub fn new(theta: f64) -> Result<Self> {
        if theta >= 0.0 && !theta.is_nan() {
            Ok(Self(theta))
        } else {
            Err(Error::invalid(format!("threshold must be >= 0, got {theta}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for AcquisitionThreshold {
    fn default() -> Self {
        Self(Self::DEFAULT)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    pub probs: Vec<f64>,
    pub entropy: f64,
}

/// Shannon entropy `-Σ p ln p` in nats, with `0 ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::invalid("entropy of an empty distribution"));
    }
    if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::invalid("entropy of negative or non-finite probabilities"));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("probabilities sum to {sum}, not 1")));
    }
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    Ok(h.max(0.0))
}

pub fn entropy_in(probs: &[f64], unit: EntropyUnit) -> Result<f64> {
    let h = entropy(probs)?;
    Ok(match unit {
        EntropyUnit::Nats => h,
        EntropyUnit::Bits => h / std::f64::consts::LN_2,
    })
}

/// Element-wise mean of per-pass distributions and the entropy of that mean.
pub fn average_passes(passes: &[Vec<f64>], unit: EntropyUnit) -> Result<PredictiveDistribution> {
    let first = passes
        .first()
        .ok_or_else(|| Error::invalid("no passes to average"))?;
    let mut probs = vec![0.0; first.len()];
    for pass in passes {
        if pass.len() != probs.len() {
            return Err(Error::shape("passes disagree in class count"));
        }
        for (acc, &p) in probs.iter_mut().zip(pass) {
            *acc += p;
        }
    }
    let n = passes.len() as f64;
    probs.iter_mut().for_each(|p| *p /= n);
    let entropy = entropy_in(&probs, unit)?;
    Ok(PredictiveDistribution { probs, entropy })
}

/// Dropout stream for pass `pass` over the image keyed `key`.
pub fn pass_stream(cfg: &McConfig, key: u64, pass: usize) -> RngStream {
    RngStream::new(cfg.seed, MC_STREAM).derive(&[key, pass as u64])
}

/// Predictive distributions for a batch of images. `keys` give each image
/// its own dropout substream, so results do not depend on batching or
/// thread scheduling.
pub fn mc_predict_batch<T: Real>(
    net: &NetworkSnapshot<T>,
    images: &[&LabeledImage],
    keys: &[u64],
    cfg: &McConfig,
) -> Result<Vec<PredictiveDistribution>> {
    if cfg.passes == 0 {
        return Err(Error::invalid("MC passes must be at least 1"));
    }
    if images.len() != keys.len() {
        return Err(Error::invalid("one key per image required"));
    }
    let arch = net.architecture();
    if let Some(bad) = images.iter().find(|i| i.pixels.shape() != arch.input_shape()) {
        return Err(Error::shape(format!(
            "image shape {:?} does not match network input {:?}",
            bad.pixels.shape(),
            arch.input_shape()
        )));
    }
    let classes = arch.num_classes();
    let per_item = arch.input_len();
    // Without dropout every pass is identical; one is exact.
    let passes = if arch.dropout_rate() == 0.0 { 1 } else { cfg.passes };
    let group = (ROWS_PER_BATCH / passes).max(1);
    let idx: Vec<usize> = (0..images.len()).collect();
    let groups: Vec<Vec<PredictiveDistribution>> = idx
        .par_chunks(group)
        .map(|chunk| {
            let single: Vec<T> = gather_inputs(images, chunk, per_item);
            let mut input = Vec::with_capacity(single.len() * passes);
            let mut streams = Vec::with_capacity(chunk.len() * passes);
            for (j, &i) in chunk.iter().enumerate() {
                for pass in 0..passes {
                    input.extend_from_slice(&single[j * per_item..(j + 1) * per_item]);
                    streams.push(pass_stream(cfg, keys[i], pass));
                }
            }
            let rows = chunk.len() * passes;
            let mode = if arch.dropout_rate() > 0.0 {
                DropoutMode::Sampled(&mut streams)
            } else {
                DropoutMode::Off
            };
            let logits = forward::forward(net, &input, rows, mode);
            let probs = forward::softmax_rows(&logits, classes);
            probs
                .chunks(classes * passes)
                .map(|img_rows| {
                    let per_pass: Vec<Vec<f64>> = img_rows
                        .chunks(classes)
                        .map(|r| r.iter().map(|v| v.to_f64()).collect())
                        .collect();
                    average_passes(&per_pass, cfg.unit)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(groups.into_iter().flatten().collect())
}

/// MC-dropout predictive distribution of a single image.
pub fn mc_predict<T: Real>(
    net: &NetworkSnapshot<T>,
    image: &LabeledImage,
    cfg: &McConfig,
) -> Result<PredictiveDistribution> {
    Ok(mc_predict_batch(net, &[image], &[0], cfg)?.remove(0))
}

/// Positions whose entropy strictly exceeds `theta`, in input order.
pub fn acquire_by_entropy(entropies: &[f64], theta: AcquisitionThreshold) -> Vec<usize> {
    entropies
        .iter()
        .enumerate()
        .filter(|(_, &h)| h > theta.value())
        .map(|(i, _)| i)
        .collect()
}

/// Score `images` by MC-dropout entropy and return the positions to label.
pub fn acquire<T: Real>(
    images: &[&LabeledImage],
    keys: &[u64],
    net: &NetworkSnapshot<T>,
    cfg: &McConfig,
    theta: AcquisitionThreshold,
) -> Result<Vec<usize>> {
    if images.is_empty() {
        return Err(Error::invalid("empty episode"));
    }
    let dists = mc_predict_batch(net, images, keys, cfg)?;
    let entropies: Vec<f64> = dists.iter().map(|d| d.entropy).collect();
    Ok(acquire_by_entropy(&entropies, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Architecture;
    use proptest::prelude::*;

    const LN10: f64 = std::f64::consts::LN_10;

    #[test]
    fn entropy_examples() {
        assert!((entropy(&[0.1; 10]).unwrap() - LN10).abs() < 1e-9);
        let mut onehot = vec![0.0; 10];
        onehot[3] = 1.0;
        assert_eq!(entropy(&onehot).unwrap(), 0.0);
        let mut half = vec![0.0; 10];
        half[0] = 0.5;
        half[1] = 0.5;
        assert!((entropy(&half).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((entropy_in(&half, EntropyUnit::Bits).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_rejects_unnormalized() {
        assert!(entropy(&[0.5, 0.6]).is_err());
        assert!(entropy(&[1.2, -0.2]).is_err());
        assert!(entropy(&[]).is_err());
    }

    #[test]
    fn stubbed_passes_average() {
        let mut a = vec![0.0; 10];
        a[0] = 1.0;
        let mut b = vec![0.0; 10];
        b[1] = 1.0;
        let d = average_passes(&[a, b], EntropyUnit::Nats).unwrap();
        let mut expected = vec![0.0; 10];
        expected[0] = 0.5;
        expected[1] = 0.5;
        assert_eq!(d.probs, expected);
        assert!((d.entropy - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn threshold_examples() {
        let theta = AcquisitionThreshold::new(0.8).unwrap();
        assert_eq!(acquire_by_entropy(&[std::f64::consts::LN_2, LN10, 0.8], theta), vec![1]);
        let high = AcquisitionThreshold::new(LN10).unwrap();
        assert!(acquire_by_entropy(&[LN10, 2.0, 0.0], high).is_empty());
        assert!(AcquisitionThreshold::new(-0.1).is_err());
    }

    fn tiny_net(rate: f64) -> NetworkSnapshot<f64> {
        NetworkSnapshot::build(Architecture::conv_net([3, 4, 4], [2, 2, 3, 3], 5, 10, rate).unwrap(), 4)
    }

    fn tiny_images(n: usize) -> Vec<LabeledImage> {
        crate::data::SyntheticSpec {
            image_shape: [3, 4, 4],
            noise: 0.3,
            ..Default::default()
        }
        .generate(1, 0)
        .unwrap()
        .into_iter()
        .take(n)
        .collect()
    }

    #[test]
    fn zero_dropout_matches_deterministic_pass() {
        let net = tiny_net(0.0);
        let imgs = tiny_images(3);
        let refs: Vec<&LabeledImage> = imgs.iter().collect();
        let det = crate::network::predict_proba(&net, &refs);
        for passes in [1, 7, 64] {
            let cfg = McConfig { passes, ..Default::default() };
            let dists = mc_predict_batch(&net, &refs, &[0, 1, 2], &cfg).unwrap();
            for (d, row) in dists.iter().zip(det.chunks(10)) {
                assert_eq!(d.probs, row.to_vec());
            }
        }
    }

    #[test]
    fn mc_is_normalized_and_deterministic() {
        let net = tiny_net(0.5);
        let imgs = tiny_images(5);
        let refs: Vec<&LabeledImage> = imgs.iter().collect();
        let keys = [10, 11, 12, 13, 14];
        let cfg = McConfig { passes: 16, seed: 9, ..Default::default() };
        let a = mc_predict_batch(&net, &refs, &keys, &cfg).unwrap();
        let b = mc_predict_batch(&net, &refs, &keys, &cfg).unwrap();
        assert_eq!(a, b);
        for d in &a {
            assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(d.entropy >= 0.0 && d.entropy <= LN10 + 1e-9);
        }
        // a single image scored alone sees the same masks
        let alone = mc_predict_batch(&net, &refs[2..3], &keys[2..3], &cfg).unwrap();
        assert_eq!(alone[0], a[2]);
    }

    #[test]
    fn single_pass_is_one_stochastic_forward() {
        let net = tiny_net(0.5);
        let imgs = tiny_images(1);
        let cfg = McConfig { passes: 1, seed: 2, ..Default::default() };
        let d = mc_predict(&net, &imgs[0], &cfg).unwrap();
        let input: Vec<f64> = imgs[0].pixels.as_slice().iter().map(|&v| v as f64).collect();
        let mut streams = vec![pass_stream(&cfg, 0, 0)];
        let logits = forward::forward(&net, &input, 1, DropoutMode::Sampled(&mut streams));
        let p = forward::softmax_rows(&logits, 10);
        assert_eq!(d.probs, p);
    }

    proptest! {
        #[test]
        fn acquisition_monotone_in_theta(
            hs in proptest::collection::vec(0.0f64..2.31, 1..50),
            t1 in 0.0f64..2.4,
            dt in 0.0f64..1.0,
        ) {
            let lo = acquire_by_entropy(&hs, AcquisitionThreshold::new(t1).unwrap());
            let hi = acquire_by_entropy(&hs, AcquisitionThreshold::new(t1 + dt).unwrap());
            prop_assert!(hi.iter().all(|i| lo.contains(i)));
        }
    }
}
