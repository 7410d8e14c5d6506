//! The streaming estimators.
//!
//! Phase 1 ([`estimate_unfair_subspace`], or
//! [`estimate_unfair_subspace_multi`] for several attributes) reads `T`
//! blocks of `b` samples and returns the unfair subspace `Û`. Phase 2
//! ([`fit_fair_npm`]) reads `𝒯` blocks of `𝓑` samples and returns a loading
//! matrix orthogonal to `Û`. Neither phase forms a `d × d` matrix: every
//! block product is accumulated one sample at a time as `x (xᵀ W)`.

mod config;
mod iterate;
mod model;
mod moments;
mod multi;
mod npm;
mod unfair;

pub use config::{multi_width, FnpmConfig, UnfairRank, DEFAULT_DEGENERATE_THRESHOLD, DEFAULT_G_THRESHOLD};
pub use iterate::MAX_RESTARTS;
pub use model::{FairPcaModel, FitMethod, ModelConfig, OfflineConfig};
pub use moments::{update_block_moments, BinaryBlockSums, GroupMoments};
pub use multi::{estimate_unfair_subspace_multi, MultiBlockSums};
pub use npm::{fit, fit_fair_npm, fit_fair_npm_observed, CovarianceProduct};
pub use unfair::{estimate_unfair_subspace, UnfairSubspace};
