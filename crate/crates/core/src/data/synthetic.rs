//! Desk-scale stand-in for CIFAR-10: each class owns a smooth pattern of
//! colored Gaussian blobs; images are that pattern plus seeded pixel noise,
//! optionally blended with another class's pattern to create ambiguous
//! examples.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabeledImage};
use crate::error::{Error, Result};
use crate::numerics::{RngStream, Tensor};

const PATTERN_STREAM: u64 = 0xB10B;
const IMAGE_STREAM: u64 = 0x1AA6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    /// `[channels, height, width]`
    pub image_shape: [usize; 3],
    pub blobs_per_class: usize,
    /// Standard deviation of additive per-pixel Gaussian noise.
    pub noise: f64,
    /// Upper bound of the weight given to a random other class's pattern.
    pub mixing: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            image_shape: [3, 32, 32],
            blobs_per_class: 4,
            noise: 0.1,
            mixing: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.classes < 2 || self.classes > 256 {
            out.push(("classes", format!("must be in 2..=256, got {}", self.classes)));
        }
        if self.image_shape.contains(&0) {
            out.push(("image_shape", "extents must be positive".to_string()));
        }
        if self.blobs_per_class == 0 {
            out.push(("blobs_per_class", "must be at least 1".to_string()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            out.push(("noise", format!("must be >= 0, got {}", self.noise)));
        }
        if !(0.0..0.5).contains(&self.mixing) {
            out.push(("mixing", format!("must be in [0, 0.5), got {}", self.mixing)));
        }
        out
    }

    /// Noise-free mean image of every class.
    pub fn class_patterns(&self) -> Vec<Vec<f32>> {
        let [c, h, w] = self.image_shape;
        let root = RngStream::new(self.seed, PATTERN_STREAM);
        (0..self.classes)
            .map(|k| {
                let mut rng = root.substream(k as u64);
                let blobs: Vec<(f64, f64, f64, Vec<f64>)> = (0..self.blobs_per_class)
                    .map(|_| {
                        let cx = rng.random::<f64>() * w as f64;
                        let cy = rng.random::<f64>() * h as f64;
                        let sigma = (2.5 + 3.5 * rng.random::<f64>()) * (h.min(w) as f64 / 32.0);
                        let amp = (0..c).map(|_| rng.random_range(-0.4..0.4)).collect();
                        (cx, cy, sigma, amp)
                    })
                    .collect();
                let mut img = vec![0f32; c * h * w];
                for ch in 0..c {
                    for y in 0..h {
                        for x in 0..w {
                            let mut v = 0.5;
                            for (cx, cy, sigma, amp) in &blobs {
                                let d2 = (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2);
                                v += amp[ch] * (-d2 / (2.0 * sigma * sigma)).exp();
                            }
                            img[(ch * h + y) * w + x] = v.clamp(0.0, 1.0) as f32;
                        }
                    }
                }
                img
            })
            .collect()
    }

    /// `per_class` images of every class, labels interleaved (`i % classes`).
    /// Different `stream` values give independent samples from the same classes.
    pub fn generate(&self, per_class: usize, stream: u64) -> Result<Vec<LabeledImage>> {
        if let Some((field, msg)) = self.problems().into_iter().next() {
            return Err(Error::invalid(format!("synthetic {field}: {msg}")));
        }
        if per_class == 0 {
            return Err(Error::invalid("per_class must be at least 1"));
        }
        let patterns = self.class_patterns();
        let root = RngStream::new(self.seed, IMAGE_STREAM).substream(stream);
        (0..per_class * self.classes)
            .map(|i| {
                let label = i % self.classes;
                let mut rng = root.substream(i as u64);
                let own = &patterns[label];
                let (weight, other) = if self.mixing > 0.0 {
                    let other = (label + 1 + rng.random_range(0..self.classes - 1)) % self.classes;
                    (rng.random::<f64>() * self.mixing, Some(&patterns[other]))
                } else {
                    (0.0, None)
                };
                let pixels = own
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| {
                        let mut v = p as f64;
                        if let Some(o) = other {
                            v = (1.0 - weight) * v + weight * o[j] as f64;
                        }
                        if self.noise > 0.0 {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            v += self.noise * z;
                        }
                        v.clamp(0.0, 1.0) as f32
                    })
                    .collect();
                Ok(LabeledImage {
                    pixels: Tensor::new(self.image_shape.to_vec(), pixels)?,
                    label: label as u8,
                })
            })
            .collect()
    }

    /// Independent training and test samples.
    pub fn dataset(&self, train_per_class: usize, test_per_class: usize) -> Result<Dataset> {
        Ok(Dataset {
            train: self.generate(train_per_class, 0)?,
            test: self.generate(test_per_class, 1)?,
        })
    }
}

/// CIFAR-shaped synthetic images: `classes * per_class` images of 3x32x32.
pub fn make_synthetic(classes: usize, per_class: usize, noise: f64, seed: u64) -> Result<Vec<LabeledImage>> {
    SyntheticSpec {
        classes,
        noise,
        seed,
        ..SyntheticSpec::default()
    }
    .generate(per_class, 0)
}
