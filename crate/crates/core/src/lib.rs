//! Secure split learning for smart-grid energy-theft detection.

pub mod scalar;
pub mod crypto;
pub mod data;
pub mod eval;
pub mod model;
pub mod protocol;
pub mod splitlearn;
pub mod tensor;

pub use scalar::Scalar;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Tape32 = tensor::Tape<f32>;
pub type Tape64 = tensor::Tape<f64>;
