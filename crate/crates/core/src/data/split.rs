use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numerics::RngStream;

const SPLIT_STREAM: u64 = 0x5B11;

/// Partition of the training pool into the initial split (which trains the
/// first network) and the ordered episode splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub initial: Vec<usize>,
    pub episodes: Vec<Vec<usize>>,
    /// Indices into the held-out test set.
    pub test: Vec<usize>,
}

impl SplitPlan {
    pub fn num_episodes(&self) -> usize {
        self.episodes.len()
    }

    /// Size of the whole training pool covered by the plan.
    pub fn train_size(&self) -> usize {
        self.initial.len() + self.episodes.iter().map(Vec::len).sum::<usize>()
    }

    pub fn with_test_count(mut self, n_test: usize) -> Self {
        self.test = (0..n_test).collect();
        self
    }

    /// Keep only the first `k` episodes.
    pub fn truncated(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.episodes.truncate(k);
        out
    }
}

/// Seeded uniform shuffle of `0..n_total` cut into `n_splits` equal
/// contiguous parts; the first part is the initial split.
pub fn make_split_plan(n_total: usize, n_splits: usize, seed: u64) -> Result<SplitPlan> {
    if n_splits < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 splits (initial + one episode), got {n_splits}"
        )));
    }
    if !n_total.is_multiple_of(n_splits) || n_total == 0 {
        return Err(Error::invalid(format!(
            "{n_total} images cannot be cut into {n_splits} equal splits"
        )));
    }
    let mut order: Vec<usize> = (0..n_total).collect();
    order.shuffle(&mut RngStream::new(seed, SPLIT_STREAM));
    let size = n_total / n_splits;
    let mut parts = order.chunks(size).map(<[usize]>::to_vec);
    let initial = parts.next().expect("at least one split");
    Ok(SplitPlan {
        initial,
        episodes: parts.collect(),
        test: Vec::new(),
    })
}
