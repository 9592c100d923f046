//! Dense tensors, the autodiff tape, kernels and optimizers.

mod adam;
mod graph;
pub mod kernels;
pub mod laplace;
mod quant;
mod tensor;

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub use adam::{adam_step, adam_step_tensor, AdamState};
pub use graph::{Grads, Graph, Var};
pub use quant::{hard_round, soft_round, soft_round_grad, QuantizerMode};
pub use tensor::Tensor;

/// Floating-point element type accepted by every numeric routine.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Default + Debug + Display + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}
