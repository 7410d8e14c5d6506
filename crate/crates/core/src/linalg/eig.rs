use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::basis::OrthonormalBasis;
use crate::linalg::matrix::DenseMatrix;

/// Relative asymmetry tolerated before the input is rejected.
pub const SYMMETRY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenOrder {
    /// Descending eigenvalue.
    ByValue,
    /// Descending `|eigenvalue|`; needed for indefinite matrices such as a
    /// second-moment difference, where large negative eigenvalues matter.
    ByMagnitude,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// Full eigendecomposition of a symmetric matrix.
///
/// The input is symmetrized as `(a + aᵀ)/2` first. Pairs come back sorted
/// descending under `order` with a stable sort, so ties keep the solver's
/// original order. Each eigenvector's sign is fixed so that its
/// largest-magnitude entry is positive.
///
/// This is the only routine in the crate that works on `d × d` matrices;
/// it backs the offline oracle and tests, never the streaming path.
pub fn symmetric_eig(a: &DenseMatrix, order: EigenOrder) -> Result<Vec<EigenPair>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition of a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(Error::NotFinite("eigendecomposition input".into()));
    }
    let n = a.rows();
    let scale = a.max_abs();
    let mut asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((a.get(i, j) - a.get(j, i)).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }

    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
    let eig = SymmetricEigen::new(sym);

    let mut pairs: Vec<EigenPair> = (0..n)
        .map(|c| {
            let mut vector: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            let pivot = vector
                .iter()
                .enumerate()
                .fold((0, 0.0_f64), |(bi, bv), (i, v)| {
                    if v.abs() > bv {
                        (i, v.abs())
                    } else {
                        (bi, bv)
                    }
                })
                .0;
            if vector[pivot] < 0.0 {
                vector.iter_mut().for_each(|v| *v = -*v);
            }
            EigenPair {
                value: eig.eigenvalues[c],
                vector,
            }
        })
        .collect();

    match order {
        EigenOrder::ByValue => pairs.sort_by(|x, y| y.value.total_cmp(&x.value)),
        EigenOrder::ByMagnitude => pairs.sort_by(|x, y| y.value.abs().total_cmp(&x.value.abs())),
    }
    Ok(pairs)
}

/// Basis from the first `count` eigenvectors of an already sorted list.
pub fn leading_basis(pairs: &[EigenPair], count: usize) -> Result<OrthonormalBasis> {
    let dim = pairs.first().map(|p| p.vector.len()).unwrap_or(0);
    if count > pairs.len() {
        return Err(Error::DimensionBudget(format!(
            "requested {count} eigenvectors of a {dim}-dimensional matrix"
        )));
    }
    let mut m = DenseMatrix::zeros(dim, count);
    for (j, p) in pairs.iter().take(count).enumerate() {
        m.set_column(j, &p.vector);
    }
    Ok(OrthonormalBasis::from_orthonormal_columns(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn diagonal_by_value() {
        let a = DenseMatrix::from_diagonal(&[1.0, 3.0, 2.0]);
        let pairs = symmetric_eig(&a, EigenOrder::ByValue).unwrap();
        let values: Vec<f64> = pairs.iter().map(|p| p.value).collect();
        assert_eq!(values, vec![3.0, 2.0, 1.0]);
        assert_eq!(pairs[0].vector, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn indefinite_by_magnitude() {
        let a = DenseMatrix::from_diagonal(&[-2.0, 1.0, 4.0]);
        let pairs = symmetric_eig(&a, EigenOrder::ByMagnitude).unwrap();
        let values: Vec<f64> = pairs.iter().map(|p| p.value).collect();
        assert_eq!(values, vec![4.0, -2.0, 1.0]);
        assert_eq!(pairs[1].vector, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn reconstructs_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 5;
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = StandardNormal.sample(&mut rng);
                a.set(i, j, v);
                a.set(j, i, v);
            }
        }
        let pairs = symmetric_eig(&a, EigenOrder::ByValue).unwrap();
        let mut rec = DenseMatrix::zeros(n, n);
        for p in &pairs {
            for i in 0..n {
                for j in 0..n {
                    rec.set(i, j, rec.get(i, j) + p.value * p.vector[i] * p.vector[j]);
                }
            }
        }
        assert!(rec.sub(&a).unwrap().max_abs() <= 1e-8);
        let basis = leading_basis(&pairs, n).unwrap();
        assert!(basis.orthonormality_defect() <= 1e-8);
    }

    #[test]
    fn rejects_asymmetric_and_non_finite() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(
            symmetric_eig(&a, EigenOrder::ByValue),
            Err(Error::NotSymmetric { .. })
        ));
        let mut b = DenseMatrix::identity(2);
        b.set(0, 0, f64::INFINITY);
        assert!(matches!(
            symmetric_eig(&b, EigenOrder::ByValue),
            Err(Error::NotFinite(_))
        ));
    }

    #[test]
    fn tiny_asymmetry_is_symmetrized() {
        let a = DenseMatrix::from_rows(&[[2.0, 1.0 + 1e-12], [1.0, 2.0]]).unwrap();
        let pairs = symmetric_eig(&a, EigenOrder::ByValue).unwrap();
        assert!((pairs[0].value - 3.0).abs() < 1e-10);
    }
}
