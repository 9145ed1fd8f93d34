//! Dense tensors, layer kernels and counter-based randomness.

pub mod ops;
mod real;
mod rng;
mod tensor;

pub use ops::{conv2d, maxpool2, softmax, MapDims};
pub use real::Real;
pub use rng::RngStream;
pub use tensor::Tensor;
