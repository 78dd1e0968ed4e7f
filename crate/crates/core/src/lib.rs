pub mod baseline;
pub mod corpus;
pub mod error;
pub mod evaluator;
pub mod model;
pub mod numerics;
pub mod scalar;
pub mod trainer;

pub use error::{HtiError, Result};
pub use model::{HtiModel, ModelConfig, Variant};
pub use scalar::Scalar;

pub type HtiModel32 = HtiModel<f32>;
pub type HtiModel64 = HtiModel<f64>;
