//! Householder QR with a nonnegative R diagonal.
//!
//! Columns are reduced left to right. A column whose trailing norm (the
//! magnitude of its R diagonal) falls below the rank threshold is reported
//! as deficient and skipped; the remaining columns keep being reduced, so
//! the returned basis is exactly the QR of the kept columns.

use crate::error::{Error, Result};
use crate::linalg::basis::OrthonormalBasis;
use crate::linalg::matrix::{dot, DenseMatrix};

/// Default relative rank threshold: a diagonal of R below
/// `DEFAULT_RANK_TOL × (largest column norm)` counts as rank deficient.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Outcome of a rank-revealing factorization.
#[derive(Debug, Clone)]
pub struct QrReport {
    /// Orthonormal basis for the span of the kept columns.
    pub basis: OrthonormalBasis,
    /// Input column indices that produced a basis column, in order.
    pub kept: Vec<usize>,
    /// Input column indices whose R diagonal fell below the threshold.
    pub deficient: Vec<usize>,
    /// Trailing norm at reduction time (the magnitude the R diagonal would
    /// take) for every input column.
    pub diagonal: Vec<f64>,
    /// Absolute threshold the diagonals were compared against.
    pub threshold: f64,
}

struct Reflector {
    /// Pivot row; entries of `v` above it are zero and not stored.
    pivot: usize,
    v: Vec<f64>,
    beta: f64,
}

impl Reflector {
    /// `x ← (I − β v vᵀ) x`
    fn apply(&self, x: &mut [f64]) {
        let tail = &mut x[self.pivot..];
        let s = self.beta * dot(&self.v, tail);
        if s != 0.0 {
            for (xi, vi) in tail.iter_mut().zip(&self.v) {
                *xi -= s * vi;
            }
        }
    }
}

/// Rank-revealing Householder QR of `m` (`d × r`).
///
/// `rank_tol` is relative to the largest column norm of `m`. Wide inputs
/// are accepted: once `d` columns have been kept every further column is
/// necessarily deficient.
pub fn qr_rank_revealing(m: &DenseMatrix, rank_tol: f64) -> Result<QrReport> {
    qr_rank_revealing_abs(m, rank_tol * m.max_column_norm())
}

/// As [`qr_rank_revealing`], with an absolute threshold on the R diagonal.
pub fn qr_rank_revealing_abs(m: &DenseMatrix, threshold: f64) -> Result<QrReport> {
    let (d, r) = m.shape();
    if !m.is_finite() {
        return Err(Error::NotFinite("QR input".into()));
    }

    let mut reflectors: Vec<Reflector> = Vec::with_capacity(r);
    // Column-major scratch holding one column at a time.
    let mut col = vec![0.0; d];
    let mut kept = Vec::with_capacity(r);
    let mut deficient = Vec::new();
    let mut diagonal = Vec::with_capacity(r);
    let mut signs: Vec<f64> = Vec::with_capacity(r);

    for j in 0..r {
        for (i, c) in col.iter_mut().enumerate() {
            *c = m.get(i, j);
        }
        for h in &reflectors {
            h.apply(&mut col);
        }
        let p = reflectors.len();
        let tail = &col[p..];
        let norm = dot(tail, tail).sqrt();
        diagonal.push(norm);
        if norm <= threshold || norm == 0.0 {
            deficient.push(j);
            continue;
        }
        let alpha = if tail[0] >= 0.0 { -norm } else { norm };
        let mut v = tail.to_vec();
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        let beta = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
        reflectors.push(Reflector { pivot: p, v, beta });
        // R_pp = alpha; flip the basis column so that the diagonal is >= 0.
        signs.push(if alpha < 0.0 { -1.0 } else { 1.0 });
        kept.push(j);
    }

    let rank = reflectors.len();
    let mut q = DenseMatrix::zeros(d, rank);
    let mut e = vec![0.0; d];
    for (c, &sign) in signs.iter().enumerate() {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[c] = 1.0;
        for h in reflectors.iter().rev() {
            h.apply(&mut e);
        }
        for (i, &v) in e.iter().enumerate() {
            q.set(i, c, sign * v);
        }
    }

    Ok(QrReport {
        basis: OrthonormalBasis::from_orthonormal_columns(q),
        kept,
        deficient,
        diagonal,
        threshold,
    })
}

/// Orthonormalizes the columns of `m`, failing on the first rank-deficient
/// column.
pub fn qr_orthonormalize(m: &DenseMatrix) -> Result<OrthonormalBasis> {
    qr_orthonormalize_with(m, DEFAULT_RANK_TOL)
}

pub fn qr_orthonormalize_with(m: &DenseMatrix, rank_tol: f64) -> Result<OrthonormalBasis> {
    if m.cols() > m.rows() {
        return Err(Error::DimensionMismatch(format!(
            "QR of a {}x{} matrix needs r <= d",
            m.rows(),
            m.cols()
        )));
    }
    let report = qr_rank_revealing(m, rank_tol)?;
    if let Some(&column) = report.deficient.first() {
        return Err(Error::RankDeficient {
            column,
            diagonal: report.diagonal[column],
            threshold: report.threshold,
        });
    }
    Ok(report.basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn identity_columns_are_fixed_points() {
        let m = DenseMatrix::from_columns(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let q = qr_orthonormalize(&m).unwrap();
        assert_close(q.columns().as_slice(), m.as_slice(), 1e-15);
    }

    #[test]
    fn single_column_is_normalized() {
        let m = DenseMatrix::column_vector(&[3.0, 4.0]).unwrap();
        let q = qr_orthonormalize(&m).unwrap();
        assert_close(q.columns().as_slice(), &[0.6, 0.8], 1e-15);
    }

    #[test]
    fn hand_gram_schmidt() {
        let m = DenseMatrix::from_rows(&[[1.0, 1.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        let q = qr_orthonormalize(&m).unwrap();
        // Nonnegative R diagonal pins the signs to +e1, +e2.
        assert_close(q.columns().as_slice(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0], 1e-15);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let m = DenseMatrix::from_columns(&[[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]]).unwrap();
        match qr_orthonormalize(&m) {
            Err(Error::RankDeficient { column, .. }) => assert_eq!(column, 1),
            other => panic!("expected RankDeficient, got {other:?}"),
        }
        let zero = DenseMatrix::zeros(3, 1);
        assert!(matches!(
            qr_orthonormalize(&zero),
            Err(Error::RankDeficient { column: 0, .. })
        ));
    }

    #[test]
    fn rank_revealing_drops_redundant_columns() {
        let m = DenseMatrix::from_columns(&[
            [1.0, 0.0, 0.0],
            [-2.0, 0.0, 0.0],
            [0.0, 0.0, 5.0],
        ])
        .unwrap();
        let rep = qr_rank_revealing(&m, 1e-12).unwrap();
        assert_eq!(rep.kept, vec![0, 2]);
        assert_eq!(rep.deficient, vec![1]);
        assert_eq!(rep.basis.rank(), 2);
        assert_close(rep.basis.columns().as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0], 1e-15);
    }

    #[test]
    fn absolute_threshold_drops_small_residuals() {
        let m = DenseMatrix::from_columns(&[[1.0, 0.0, 0.0], [1.0, 1e-9, 0.0], [0.0, 0.0, 2.0]]).unwrap();
        assert_eq!(qr_rank_revealing(&m, 1e-12).unwrap().kept, vec![0, 1, 2]);
        let rep = qr_rank_revealing_abs(&m, 1e-8).unwrap();
        assert_eq!(rep.kept, vec![0, 2]);
        assert_eq!(rep.threshold, 1e-8);
    }

    #[test]
    fn too_wide_is_rejected() {
        let m = DenseMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(qr_orthonormalize(&m), Err(Error::DimensionMismatch(_))));
    }

    fn tall_matrix() -> impl Strategy<Value = DenseMatrix> {
        (2usize..9, 1usize..4).prop_flat_map(|(d, r)| {
            let r = r.min(d);
            proptest::collection::vec(-10.0f64..10.0, d * r)
                .prop_map(move |v| DenseMatrix::from_row_major(d, r, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn output_is_orthonormal_and_idempotent(m in tall_matrix()) {
            if let Ok(q) = qr_orthonormalize(&m) {
                let gram = q.columns().t_matmul(q.columns()).unwrap();
                let eye = DenseMatrix::identity(q.rank());
                prop_assert!(gram.sub(&eye).unwrap().max_abs() <= 1e-10);
                let again = qr_orthonormalize(q.columns()).unwrap();
                prop_assert!(again.columns().sub(q.columns()).unwrap().max_abs() <= 1e-12);
                // Same column space: the input has no component outside col(Q).
                let resid = crate::linalg::project_out(&q, &m).unwrap();
                prop_assert!(resid.max_abs() <= 1e-9 * m.max_abs().max(1.0));
            }
        }
    }
}
