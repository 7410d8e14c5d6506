use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::basis::OrthonormalBasis;
use crate::linalg::eig::{symmetric_eig, EigenOrder};
use crate::linalg::matrix::{dot, DenseMatrix};

pub const SPECTRAL_TOL: f64 = 1e-10;
pub const SPECTRAL_MAX_ITERS: usize = 10_000;

/// Gram matrices up to this order are decomposed directly. Power iteration
/// stalls when the two leading singular values nearly coincide.
const DIRECT_GRAM_MAX: usize = 128;

/// `m − Q(Qᵀm)`: removes the component of every column of `m` lying in
/// `col(Q)`. Two tall-skinny products; no `d × d` projector is formed.
pub fn project_out(q: &OrthonormalBasis, m: &DenseMatrix) -> Result<DenseMatrix> {
    if q.ambient_dim() != m.rows() {
        return Err(Error::DimensionMismatch(format!(
            "basis in dimension {} cannot act on a {}x{} matrix",
            q.ambient_dim(),
            m.rows(),
            m.cols()
        )));
    }
    if q.rank() == 0 {
        return Ok(m.clone());
    }
    let coeffs = q.columns().t_matmul(m)?;
    let inside = q.columns().matmul(&coeffs)?;
    m.sub(&inside)
}

/// Vector form of [`project_out`].
pub fn project_out_vec(q: &OrthonormalBasis, v: &[f64]) -> Result<Vec<f64>> {
    if q.ambient_dim() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "basis in dimension {} cannot act on a vector of length {}",
            q.ambient_dim(),
            v.len()
        )));
    }
    let coeffs = q.columns().t_mul_vec(v)?;
    let mut out = v.to_vec();
    for (i, o) in out.iter_mut().enumerate() {
        *o -= dot(q.columns().row(i), &coeffs);
    }
    Ok(out)
}

/// Largest singular value, from the Gram matrix `mᵀm`.
///
/// Small Gram matrices (at most 128 columns in `m`, which covers every
/// `Uᵀ V` and `Π V` in the crate) go through `symmetric_eig`. Larger ones
/// use power iteration, which stops when the Rayleigh quotient changes by
/// at most `SPECTRAL_TOL` relative and fails with `NoConvergence` after
/// `SPECTRAL_MAX_ITERS`. Its start vector comes from a fixed seed.
pub fn spectral_norm(m: &DenseMatrix) -> Result<f64> {
    if !m.is_finite() {
        return Err(Error::NotFinite("spectral norm input".into()));
    }
    if m.cols() == 0 || m.rows() == 0 {
        return Ok(0.0);
    }
    let gram = m.t_matmul(m)?;
    if gram.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let n = gram.rows();
    if n == 1 {
        return Ok(gram.get(0, 0).max(0.0).sqrt());
    }
    if n <= DIRECT_GRAM_MAX {
        let top = symmetric_eig(&gram, EigenOrder::ByValue)?[0].value;
        return Ok(top.max(0.0).sqrt());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_5eed);
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut v);
    let mut rho = 0.0_f64;
    let mut change = f64::INFINITY;
    for iter in 0..SPECTRAL_MAX_ITERS {
        let mut w = gram.mul_vec(&v)?;
        let next = dot(&v, &w);
        let wn = dot(&w, &w).sqrt();
        if wn == 0.0 {
            // Start vector landed in the null space; the Gram matrix is
            // nonzero, so nudge off it deterministically.
            v.iter_mut().enumerate().for_each(|(i, x)| *x += 1.0 / (i + 2) as f64);
            normalize(&mut v);
            continue;
        }
        w.iter_mut().for_each(|x| *x /= wn);
        change = (next - rho).abs() / next.abs().max(f64::MIN_POSITIVE);
        rho = next;
        v = w;
        if iter > 0 && change <= SPECTRAL_TOL {
            return Ok(rho.max(0.0).sqrt());
        }
    }
    Err(Error::NoConvergence {
        iterations: SPECTRAL_MAX_ITERS,
        residual: change,
    })
}

/// Sine of the largest principal angle, `‖(I − AAᵀ)B‖₂`.
///
/// For bases of equal rank this is symmetric and equals `‖AAᵀ − BBᵀ‖₂`.
pub fn sin_distance(a: &OrthonormalBasis, b: &OrthonormalBasis) -> Result<f64> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(Error::DimensionMismatch(format!(
            "subspaces of R^{} and R^{}",
            a.ambient_dim(),
            b.ambient_dim()
        )));
    }
    spectral_norm(&project_out(a, b.columns())?)
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::qr::qr_orthonormalize;
    use proptest::prelude::*;

    fn basis(cols: &[&[f64]]) -> OrthonormalBasis {
        qr_orthonormalize(&DenseMatrix::from_columns(cols).unwrap()).unwrap()
    }

    #[test]
    fn project_out_examples() {
        let e1 = basis(&[&[1.0, 0.0]]);
        let cases: [(&[f64], [f64; 2]); 3] = [
            (&[1.0, 0.0], [0.0, 0.0]),
            (&[0.0, 1.0], [0.0, 1.0]),
            (&[1.0, 1.0], [0.0, 1.0]),
        ];
        for (m, want) in cases {
            let r = project_out(&e1, &DenseMatrix::column_vector(m).unwrap()).unwrap();
            assert_eq!(r.as_slice(), &want);
        }
        let bad = DenseMatrix::column_vector(&[1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(project_out(&e1, &bad), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn spectral_norm_examples() {
        let d = DenseMatrix::from_diagonal(&[3.0, 2.0]);
        assert!((spectral_norm(&d).unwrap() - 3.0).abs() < 1e-9);
        assert_eq!(spectral_norm(&DenseMatrix::zeros(3, 2)).unwrap(), 0.0);
        let nil = DenseMatrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        assert!((spectral_norm(&nil).unwrap() - 1.0).abs() < 1e-9);
        // Start vector orthogonal to the top direction would be a trap for
        // an all-ones start.
        let m = DenseMatrix::from_rows(&[[1.0, -1.0]]).unwrap();
        assert!((spectral_norm(&m).unwrap() - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn spectral_norm_small_gap_is_accurate() {
        let d = DenseMatrix::from_diagonal(&[1.0, 0.999, 0.5, 0.1]);
        assert!((spectral_norm(&d).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_power_path() {
        let diag: Vec<f64> = (0..200).map(|i| if i == 7 { 5.0 } else { 1.0 + i as f64 / 200.0 }).collect();
        let d = DenseMatrix::from_diagonal(&diag);
        assert!((spectral_norm(&d).unwrap() - 5.0).abs() < 1e-8);
    }

    #[test]
    fn sin_distance_examples() {
        let e1 = basis(&[&[1.0, 0.0]]);
        let e2 = basis(&[&[0.0, 1.0]]);
        let diag = basis(&[&[1.0, 1.0]]);
        assert!(sin_distance(&e1, &e1).unwrap() < 1e-15);
        assert!((sin_distance(&e1, &e2).unwrap() - 1.0).abs() < 1e-12);
        assert!((sin_distance(&e1, &diag).unwrap() - 0.5f64.sqrt()).abs() < 1e-10);
        let e3 = OrthonormalBasis::standard(3, &[0]).unwrap();
        assert!(matches!(sin_distance(&e1, &e3), Err(Error::DimensionMismatch(_))));
    }

    fn random_basis(d: usize, r: usize) -> impl Strategy<Value = OrthonormalBasis> {
        proptest::collection::vec(-1.0f64..1.0, d * r).prop_filter_map("rank", move |v| {
            qr_orthonormalize(&DenseMatrix::from_row_major(d, r, v).unwrap()).ok()
        })
    }

    proptest! {
        #[test]
        fn sin_distance_is_symmetric_and_bounded(
            (a, b) in (3usize..8, 1usize..3).prop_flat_map(|(d, r)| (random_basis(d, r), random_basis(d, r)))
        ) {
            let ab = sin_distance(&a, &b).unwrap();
            let ba = sin_distance(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-8);
            prop_assert!((0.0..=1.0 + 1e-8).contains(&ab));
            // Equal-rank identity with the projector distance and the smallest
            // principal cosine.
            let pa = a.columns().matmul(&a.columns().transpose()).unwrap();
            let pb = b.columns().matmul(&b.columns().transpose()).unwrap();
            let proj = spectral_norm(&pa.sub(&pb).unwrap()).unwrap();
            prop_assert!((ab - proj).abs() <= 1e-7);
        }

        #[test]
        fn project_out_leaves_no_component(
            (q, m) in (3usize..8, 1usize..3, 1usize..4).prop_flat_map(|(d, r, c)| {
                (random_basis(d, r), proptest::collection::vec(-5.0f64..5.0, d * c)
                    .prop_map(move |v| DenseMatrix::from_row_major(d, c, v).unwrap()))
            })
        ) {
            let p = project_out(&q, &m).unwrap();
            let inner = q.columns().t_matmul(&p).unwrap();
            prop_assert!(inner.max_abs() <= 1e-10 * m.max_abs().max(1e-300));
        }
    }
}
