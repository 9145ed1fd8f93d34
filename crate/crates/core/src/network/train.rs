use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::LabeledImage;
use crate::error::{Error, Result};
use crate::network::adam::{adam_step, AdamState};
use crate::network::forward::{self, DropoutMode};
use crate::network::NetworkSnapshot;
use crate::numerics::ops::softmax_cross_entropy;
use crate::numerics::{Real, RngStream};

const TRAIN_STREAM: u64 = 0x7EA1;
const HOLDOUT: u64 = 0;
const SHUFFLE: u64 = 1;
const DROPOUT: u64 = 2;

const EVAL_BATCH: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// Epochs that always run before early stopping may end training.
    pub min_epochs: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 64,
            max_epochs: 100,
            early_stop_patience: 5,
            min_epochs: 0,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Field name and message for every violated constraint.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            out.push(("learning_rate", format!("must be positive, got {}", self.learning_rate)));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                out.push((name, format!("must be in [0, 1), got {b}")));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            out.push(("adam_epsilon", format!("must be positive, got {}", self.adam_epsilon)));
        }
        if self.batch_size < 1 {
            out.push(("batch_size", "must be at least 1".into()));
        }
        if self.early_stop_patience < 1 {
            out.push(("early_stop_patience", "must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            out.push((
                "validation_fraction",
                format!("must be in (0, 1), got {}", self.validation_fraction),
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().first() {
            None => Ok(()),
            Some((field, msg)) => Err(Error::invalid(format!("{field}: {msg}"))),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// What happened inside one [`fine_tune`] call.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainStats {
    pub epochs_run: usize,
    /// 1-based epoch whose parameters were returned (0 when none ran).
    pub best_epoch: usize,
    pub val_accuracy: Vec<f64>,
    pub train_loss: Vec<f64>,
}

/// Seeded partition of `0..n` into (training, validation) positions.
///
/// With a single example there is nothing to hold out, so it serves as both.
pub fn holdout_split(n: usize, cfg: &TrainConfig) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    if n < 2 {
        return (order.clone(), order);
    }
    let mut rng = RngStream::new(cfg.seed, TRAIN_STREAM).substream(HOLDOUT);
    order.shuffle(&mut rng);
    let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
    let val = order.split_off(n - n_val);
    (order, val)
}

pub(crate) fn gather_inputs<T: Real>(items: &[&LabeledImage], idx: &[usize], per_item: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(idx.len() * per_item);
    for &i in idx {
        out.extend(items[i].pixels.as_slice().iter().map(|&v| T::from_f64(v as f64)));
    }
    out
}

fn check_data<T: Real>(net: &NetworkSnapshot<T>, data: &[&LabeledImage]) -> Result<()> {
    let arch = net.architecture();
    let classes = arch.num_classes();
    for (i, item) in data.iter().enumerate() {
        if item.pixels.shape() != arch.input_shape() {
            return Err(Error::shape(format!(
                "example {i} has shape {:?}, network expects {:?}",
                item.pixels.shape(),
                arch.input_shape()
            )));
        }
        if item.label as usize >= classes {
            return Err(Error::invalid(format!(
                "example {i} has label {} outside 0..{classes}",
                item.label
            )));
        }
    }
    Ok(())
}

/// Train a copy of `net` on `data` with dropout active, Adam with fresh
/// moments, and early stopping on a seeded holdout.
pub fn fine_tune<T: Real>(
    net: &NetworkSnapshot<T>,
    data: &[&LabeledImage],
    cfg: &TrainConfig,
) -> Result<NetworkSnapshot<T>> {
    fine_tune_with_stats(net, data, cfg).map(|(n, _)| n)
}

pub fn fine_tune_with_stats<T: Real>(
    net: &NetworkSnapshot<T>,
    data: &[&LabeledImage],
    cfg: &TrainConfig,
) -> Result<(NetworkSnapshot<T>, TrainStats)> {
    if data.is_empty() {
        return Err(Error::EmptyFineTuneSet);
    }
    cfg.validate()?;
    check_data(net, data)?;
    let mut work = net.clone();
    let mut stats = TrainStats::default();
    if cfg.max_epochs == 0 {
        return Ok((work, stats));
    }

    let per_item = net.architecture().input_len();
    let root = RngStream::new(cfg.seed, TRAIN_STREAM);
    let (train_idx, val_idx) = holdout_split(data.len(), cfg);
    let val_items: Vec<&LabeledImage> = val_idx.iter().map(|&i| data[i]).collect();

    let mut state = AdamState::new(work.params());
    let mut best_params = None;
    let mut best_acc = f64::NEG_INFINITY;
    let mut since_best = 0;

    for epoch in 0..cfg.max_epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut root.derive(&[SHUFFLE, epoch as u64]));
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let input: Vec<T> = gather_inputs(data, chunk, per_item);
            let labels: Vec<usize> = chunk.iter().map(|&i| data[i].label as usize).collect();
            let mut streams: Vec<RngStream> = (0..chunk.len())
                .map(|r| root.derive(&[DROPOUT, epoch as u64, (b * cfg.batch_size + r) as u64]))
                .collect();
            let (logits, trace) =
                forward::forward_traced(&work, &input, chunk.len(), DropoutMode::Sampled(&mut streams));
            let mut grad = vec![T::ZERO; logits.len()];
            let loss = softmax_cross_entropy(&logits, &labels, &mut grad);
            epoch_loss += loss * chunk.len() as f64;
            let (grads, _) = forward::backward(&work, &trace, &grad);
            adam_step(work.params_mut(), &grads, &mut state, cfg)?;
        }
        stats.train_loss.push(epoch_loss / train_idx.len() as f64);
        stats.epochs_run = epoch + 1;

        let acc = evaluate_accuracy(&work, &val_items)?;
        stats.val_accuracy.push(acc);
        if acc > best_acc {
            best_acc = acc;
            best_params = Some(work.params().to_vec());
            stats.best_epoch = epoch + 1;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience && epoch + 1 >= cfg.min_epochs {
                break;
            }
        }
    }
    if let Some(params) = best_params {
        work.set_params(params)?;
    }
    if !work.params().iter().all(|p| p.all_finite()) {
        return Err(Error::invalid("training diverged to non-finite parameters"));
    }
    Ok((work, stats))
}

/// Class probabilities `[n, classes]` from one deterministic pass.
pub fn predict_proba<T: Real>(net: &NetworkSnapshot<T>, items: &[&LabeledImage]) -> Vec<T> {
    let per_item = net.architecture().input_len();
    let classes = net.architecture().num_classes();
    let mut out = Vec::with_capacity(items.len() * classes);
    let idx: Vec<usize> = (0..items.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let input: Vec<T> = gather_inputs(items, chunk, per_item);
        let logits = forward::forward(net, &input, chunk.len(), DropoutMode::Off);
        out.extend(forward::softmax_rows(&logits, classes));
    }
    out
}

/// Fraction of correct argmax predictions with dropout disabled.
pub fn evaluate_accuracy<T: Real>(net: &NetworkSnapshot<T>, test: &[&LabeledImage]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    check_data(net, test)?;
    let classes = net.architecture().num_classes();
    let probs = predict_proba(net, test);
    let correct = probs
        .chunks(classes)
        .zip(test)
        .filter(|(row, item)| forward::argmax(row) == item.label as usize)
        .count();
    Ok(correct as f64 / test.len() as f64)
}
