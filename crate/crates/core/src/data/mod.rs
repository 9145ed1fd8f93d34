//! Images, dataset ingestion, split plans and the simulated labeling oracle.

mod cifar;
mod split;
mod synthetic;

pub use cifar::{
    encode_records, load_cifar10, load_cifar10_dir, parse_records, write_cifar10, RECORD_BYTES,
};
pub use split::{make_split_plan, SplitPlan};
pub use synthetic::{make_synthetic, SyntheticSpec};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// One image with pixel values in `[0, 1]` and its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub pixels: Tensor<f32>,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub train: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
}

impl Dataset {
    pub fn train_refs(&self, ids: &[usize]) -> Vec<&LabeledImage> {
        ids.iter().map(|&i| &self.train[i]).collect()
    }

    pub fn test_refs(&self) -> Vec<&LabeledImage> {
        self.test.iter().collect()
    }
}

/// Ground-truth labels standing in for the human annotator.
#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    labels: Vec<u8>,
}

impl Oracle {
    pub fn new(labels: Vec<u8>) -> Self {
        Self { labels }
    }

    pub fn from_images(images: &[LabeledImage]) -> Self {
        Self::new(images.iter().map(|i| i.label).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, id: usize) -> Result<u8> {
        self.labels
            .get(id)
            .copied()
            .ok_or_else(|| Error::invalid(format!("oracle has no image {id}")))
    }
}
