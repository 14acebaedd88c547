//! The ViT forward pass and CLS/patch layer specialization.

mod attention;
pub mod checkpoint;
mod config;
mod layers;
mod params;
mod partition;
mod vit;

pub use attention::{attention, attention_head, AttentionSpec};
pub use config::{KindSpec, LayerKind, ModelConfig, RegisterRouting, SpecConfig};
pub use layers::{
    layer_norm, layer_scale, specialized_apply, ClsWeights, LayerWeights, PathPair, LN_EPS,
};
pub use params::{ParamGrads, ParamId, ParamStore, Session};
pub use partition::{Route, TokenPartition};
pub use vit::{extract_patches, Block, ClsInit, ForwardVars, Linear, Model, ModelOutput};
