//! Overfitted neural video codec.

pub mod coolchic;
pub mod entropy;
pub mod encoder;
pub mod error;
pub mod flow;
pub mod metrics;
pub mod numerics;
pub mod pipeline;

pub use error::{Error, Result};

pub type Tensor32 = numerics::Tensor<f32>;
pub type Graph32 = numerics::Graph<f32>;
pub type Decoder = coolchic::CoolChicDecoder<f32>;
