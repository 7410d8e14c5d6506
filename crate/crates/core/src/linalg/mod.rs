//! Dense kernels for tall-skinny streaming workloads.

mod basis;
mod eig;
mod matrix;
mod ops;
mod qr;

pub use basis::{OrthonormalBasis, ORTHONORMAL_TOL};
pub use eig::{leading_basis, symmetric_eig, EigenOrder, EigenPair, SYMMETRY_TOL};
pub use matrix::{axpy, dot, norm2, DenseMatrix};
pub use ops::{project_out, project_out_vec, sin_distance, spectral_norm, SPECTRAL_MAX_ITERS, SPECTRAL_TOL};
pub use qr::{qr_orthonormalize, qr_orthonormalize_with, qr_rank_revealing, qr_rank_revealing_abs, QrReport, DEFAULT_RANK_TOL};
