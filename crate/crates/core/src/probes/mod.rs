//! Token-similarity, magnitude and PCA probes over captured activations.

pub mod export;
mod magnitude;
mod pca;
mod separation;
mod similarity;
mod trace;

pub use magnitude::{dominant_dims, top_magnitude_dims, DominantDims};
pub use pca::{min_max, pca_rgb, principal_projections, RgbImage};
pub use separation::{ln_separation_demo, ln_separation_with, ln_similarity, SeparationSetup};
pub use similarity::{
    cosine, cosine_stats, similarity_table, token_similarities, BlockSelector, SimRow, SimStats,
    ALL_PAIRS_MAX_PATCHES, SAMPLED_PAIRS,
};
pub use trace::{ProbePoint, ProbeRecord, ProbeTrace};
