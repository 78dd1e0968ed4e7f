//! Tensors, differentiable primitives, the parameter registry and the
//! finite-difference gradient checker.

mod gradcheck;
pub mod ops;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use ops::{masked_softmax, masked_softmax_backward, ConvGeom};
pub use tape::{Gradients, Param, ParamId, ParamTape};
pub use tensor::Tensor;
