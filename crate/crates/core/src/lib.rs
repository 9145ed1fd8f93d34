//! Episode-based active learning with MC-dropout convolutional networks.
//!
//! A classifier trained on an initial split sees the rest of the training
//! pool as a stream of episodes. In every episode it scores the new images
//! by the entropy of their MC-dropout predictive distribution, requests
//! labels for the uncertain ones and is updated by one of four rules; after
//! any episode a final-training rule yields the network that would be
//! deployed if learning stopped there.
//!
//! Modules, bottom-up:
//! - [`numerics`]: tensors, layer kernels, counter-based random streams.
//! - [`network`]: the CNN, Adam, early-stopped fine-tuning, snapshots.
//! - [`uncertainty`]: MC-dropout predictions and entropy-threshold acquisition.
//! - [`data`]: CIFAR-10 batches, synthetic data, split plans, the oracle.
//! - [`episodic`]: the strategy engine and baselines.
//! - [`report`]: efficiency scores, aggregation, CSV and SVG output.
//! - [`experiment`]: config-driven runs behind the command line tool.

pub mod data;
pub mod episodic;
mod error;
pub mod experiment;
pub mod network;
pub mod numerics;
pub mod report;
pub mod uncertainty;

pub use error::{Error, Result};
