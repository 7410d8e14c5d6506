//! Streaming fair PCA with a memory budget of `O(d · max(m, k))`.
//!
//! The pipeline has two strictly separated phases. The first pass over the
//! stream estimates the *unfair subspace*: the span of the group mean gap
//! and the leading eigenvectors (by magnitude) of the group second-moment
//! gap, found by a noisy power method. The second pass runs a noisy power
//! method on the covariance deflated by that subspace, producing a loading
//! matrix whose columns are orthogonal to it.
//!
//! Module map:
//! - [`linalg`]: QR, projections, eigendecomposition, spectral norms.
//! - [`stream`]: samples, one-pass streams, CSV ingestion, synthetic data.
//! - [`fairpca`]: the streaming estimators and the fitted model.
//! - [`oracle`]: exact offline solutions used as ground truth.
//! - [`metrics`]: explained variance, fairness norms, MMD², probes.

pub mod error;
pub mod exec;
pub mod fairpca;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod stream;

pub use error::{Error, ErrorClass, Result};
pub use exec::Execution;
