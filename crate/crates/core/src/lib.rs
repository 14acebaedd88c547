//! Vision Transformer engine with CLS/patch layer specialization.
//!
//! Specialized layers hold two weight sets: one applied to the CLS token
//! (and, by default, register tokens) and one applied to patch tokens.
//! Attention still mixes all tokens. The crate bundles the model, the
//! activation probes used to study token separation, exact parameter and
//! FLOPs accounting, and a toy training loop.

pub mod accounting;
mod error;
pub mod exec;
pub mod imageio;
pub mod model;
pub mod probes;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use model::{LayerKind, Model, ModelConfig, SpecConfig};
pub use tensor::{Graph, Tensor, TensorError, Var};
