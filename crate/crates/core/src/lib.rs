//! Few-pair semantic editing for layered generator latents.
//!
//! Directions are estimated from a handful of (positive, negative) latent
//! pairs as the unit vector best aligned, in the squared-cosine sense, with
//! every pair difference. Edits add a scaled direction to a chosen subset of
//! layers. Attribute styles are sampled from a tangent-plane parameterization
//! of a patch of the unit sphere around the styles' dominant direction.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! and `*32` aliases below pin the common choices.

pub mod direction;
pub mod edit;
pub mod error;
pub mod latent;
pub mod oracle;
pub mod pair;
pub mod scalar;
pub mod store;
pub mod style;
pub mod svd;

pub use direction::{
    difference_directions, estimate_direction, estimate_dominant, mean_direction, objective_value, pairwise_stats,
    pairwise_stats_vectors, DirectionEstimate, Method, SimilarityStats,
};
pub use edit::{apply_delta, apply_edit, apply_sequential, interpolate_edit, preset_layer_mask, style_preset};
pub use error::{Error, Result, Warning};
pub use latent::{cosine_similarity, euclidean_distance, identity_scores, normalize, IdentityScores, LayerMask};
pub use pair::{assemble_dataset, blend_pair, flip_horizontal, PartMask, RasterImage};
pub use scalar::Scalar;
pub use style::{
    apply_style, baseline_convex, baseline_strength, fit_manifold, sample_style, sample_style_random, style_diversity,
    SampleKind,
};

pub type LatentCode64 = latent::LatentCode<f64>;
pub type LatentCode32 = latent::LatentCode<f32>;
pub type FlatVector64 = latent::FlatVector<f64>;
pub type FlatVector32 = latent::FlatVector<f32>;
pub type PairDataset64 = pair::PairDataset<f64>;
pub type PairDataset32 = pair::PairDataset<f32>;
pub type LatentBatch64 = pair::LatentBatch<f64>;
pub type EditDirection64 = direction::EditDirection<f64>;
pub type EditDirection32 = direction::EditDirection<f32>;
pub type EditInstruction64 = edit::EditInstruction<f64>;
pub type StyleManifold64 = style::StyleManifold<f64>;
pub type StyleManifold32 = style::StyleManifold<f32>;
pub type StyleSample64 = style::StyleSample<f64>;
pub type PlantedWorld64 = oracle::PlantedWorld<f64>;
pub type DirectionLibrary64 = store::DirectionLibrary<f64>;
