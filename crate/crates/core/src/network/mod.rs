//! The convolutional classifier: architecture, parameters, training and evaluation.

mod adam;
mod arch;
pub mod forward;
mod snapshot;
mod train;

pub use adam::{adam_step, AdamState};
pub use arch::{ActShape, Architecture, Layer};
pub use forward::DropoutMode;
pub use snapshot::{build_paper_network, Metadata, NetworkSnapshot, Provenance, SetTag};
pub use train::{
    evaluate_accuracy, fine_tune, fine_tune_with_stats, holdout_split, predict_proba, TrainConfig,
    TrainStats,
};
pub(crate) use train::gather_inputs;
