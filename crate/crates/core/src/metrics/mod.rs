//! Evaluation of loading matrices: explained variance, the fairness norm
//! `‖UᵀV‖₂`, MMD² between projected groups, suboptimality against an
//! oracle, and a seeded success-rate probe over fit configurations.

mod mmd;
mod probe;

pub use mmd::{median_heuristic_bandwidth, mmd_squared, Bandwidth, Kernel, MmdEstimator, MEDIAN_SUBSAMPLE};
pub use probe::{derive_seed, pafo_probe, ProbeConfig, ProbeGridPoint, ProbePointResult, PafoProbeResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, spectral_norm, DenseMatrix, OrthonormalBasis};
use crate::oracle::trace_quadratic;
use crate::stream::LabeledSample;

/// `(tr(Vᵀ Σ V), 100 · tr(Vᵀ Σ V) / tr(Σ))`
pub fn explained_variance(v: &OrthonormalBasis, sigma: &DenseMatrix) -> Result<(f64, f64)> {
    if sigma.rows() != v.ambient_dim() || !sigma.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "basis in dimension {}, covariance is {}x{}",
            v.ambient_dim(),
            sigma.rows(),
            sigma.cols()
        )));
    }
    let abs = trace_quadratic(sigma, v)?;
    Ok((abs, percent(abs, sigma.trace())))
}

/// Explained variance of the uncentered second moment of `data`, computed
/// from the projections without forming `Σ`.
pub fn explained_variance_data(v: &OrthonormalBasis, data: &[LabeledSample]) -> Result<(f64, f64)> {
    let d = v.ambient_dim();
    let (mut captured, mut total) = (0.0, 0.0);
    for s in data {
        if s.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "sample of dimension {} for a basis in dimension {d}",
                s.dim()
            )));
        }
        let y = v.columns().t_mul_vec(&s.features)?;
        captured += dot(&y, &y);
        total += dot(&s.features, &s.features);
    }
    let n = data.len().max(1) as f64;
    Ok((captured / n, percent(captured, total)))
}

fn percent(part: f64, whole: f64) -> f64 {
    if whole > 0.0 {
        100.0 * part / whole
    } else {
        0.0
    }
}

/// `‖Uᵀ V‖₂ = ‖Π_U V‖₂`; zero for an empty `U`.
pub fn fairness_spectral_norm(u: &OrthonormalBasis, v: &OrthonormalBasis) -> Result<f64> {
    if u.ambient_dim() != v.ambient_dim() {
        return Err(Error::DimensionMismatch(format!(
            "bases in dimensions {} and {}",
            u.ambient_dim(),
            v.ambient_dim()
        )));
    }
    if u.rank() == 0 || v.rank() == 0 {
        return Ok(0.0);
    }
    spectral_norm(&u.columns().t_matmul(v.columns())?)
}

/// `tr(V⋆ᵀ Σ V⋆) − tr(Vᵀ Σ V)`
pub fn suboptimality(v: &OrthonormalBasis, v_star: &OrthonormalBasis, sigma: &DenseMatrix) -> Result<f64> {
    if v.rank() != v_star.rank() {
        return Err(Error::DimensionMismatch(format!(
            "loadings have {} and {} columns",
            v.rank(),
            v_star.rank()
        )));
    }
    let (best, _) = explained_variance(v_star, sigma)?;
    let (got, _) = explained_variance(v, sigma)?;
    Ok(best - got)
}

/// Metrics of one model on one dataset. Entries that were not requested
/// are absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explained_variance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explained_variance_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fairness_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mmd_squared: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suboptimality: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sin_to_oracle: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{qr_orthonormalize, sin_distance};
    use proptest::prelude::*;

    fn span(d: usize, axes: &[usize]) -> OrthonormalBasis {
        OrthonormalBasis::standard(d, axes).unwrap()
    }

    #[test]
    fn explained_variance_examples() {
        let sigma = DenseMatrix::from_diagonal(&[3.0, 2.0, 1.0]);
        let (abs, pct) = explained_variance(&span(3, &[0, 1]), &sigma).unwrap();
        assert!((abs - 5.0).abs() < 1e-12 && (pct - 500.0 / 6.0).abs() < 1e-12);
        let (abs, pct) = explained_variance(&span(3, &[0, 1, 2]), &sigma).unwrap();
        assert!((abs - 6.0).abs() < 1e-12 && (pct - 100.0).abs() < 1e-12);
        assert!(explained_variance(&span(2, &[0]), &sigma).is_err());
    }

    #[test]
    fn data_path_matches_matrix_path() {
        let data: Vec<_> = (0..50)
            .map(|i| {
                let t = i as f64;
                LabeledSample::binary(i % 2, vec![t.sin() * 3.0, t.cos(), (0.3 * t).sin() - 0.2])
            })
            .collect();
        let stats = crate::oracle::offline_statistics(&data).unwrap();
        let v = qr_orthonormalize(&DenseMatrix::from_columns(&[[1.0, 2.0, 0.5], [0.0, 1.0, -1.0]]).unwrap()).unwrap();
        let (a, p) = explained_variance(&v, &stats.sigma).unwrap();
        let (b, q) = explained_variance_data(&v, &data).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs());
        assert!((p - q).abs() <= 1e-10 * p.abs());
    }

    #[test]
    fn fairness_examples() {
        assert_eq!(fairness_spectral_norm(&span(2, &[0]), &span(2, &[1])).unwrap(), 0.0);
        assert!((fairness_spectral_norm(&span(2, &[0]), &span(2, &[0])).unwrap() - 1.0).abs() < 1e-12);
        let (c, s) = (60f64.to_radians().cos(), 60f64.to_radians().sin());
        let v = OrthonormalBasis::try_new(DenseMatrix::column_vector(&[c, s]).unwrap()).unwrap();
        assert!((fairness_spectral_norm(&span(2, &[0]), &v).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(fairness_spectral_norm(&OrthonormalBasis::empty(2), &v).unwrap(), 0.0);
    }

    #[test]
    fn suboptimality_examples() {
        let sigma = DenseMatrix::from_diagonal(&[3.0, 2.0, 1.0]);
        assert_eq!(suboptimality(&span(3, &[0]), &span(3, &[0]), &sigma).unwrap(), 0.0);
        assert!((suboptimality(&span(3, &[1]), &span(3, &[0]), &sigma).unwrap() - 1.0).abs() < 1e-12);
        assert!(suboptimality(&span(3, &[1, 2]), &span(3, &[0]), &sigma).is_err());
    }

    fn random_basis(d: usize, k: usize, entries: &[f64]) -> OrthonormalBasis {
        qr_orthonormalize(&DenseMatrix::from_row_major(d, k, entries[..d * k].to_vec()).unwrap()).unwrap()
    }

    proptest! {
        #[test]
        fn zero_iff_inside_complement(entries in proptest::collection::vec(-1.0f64..1.0, 64), d in 3usize..7) {
            let u = random_basis(d, 1, &entries);
            let raw = DenseMatrix::from_row_major(d, 2, entries[8..8 + 2 * d].to_vec()).unwrap();
            let inside = crate::linalg::project_out(&u, &raw).unwrap();
            if let Ok(v) = qr_orthonormalize(&inside) {
                prop_assert!(fairness_spectral_norm(&u, &v).unwrap() <= 1e-10);
            }
            if let Ok(v) = qr_orthonormalize(&raw) {
                let outside = crate::linalg::project_out(&u, v.columns()).unwrap();
                if outside.sub(v.columns()).unwrap().max_abs() > 1e-6 {
                    prop_assert!(fairness_spectral_norm(&u, &v).unwrap() > 1e-10);
                }
            }
        }

        #[test]
        fn equal_rank_consistency(entries in proptest::collection::vec(-1.0f64..1.0, 64), d in 3usize..7, k in 1usize..3) {
            // For k = rank U: ‖UᵀV‖₂ = σ_max(UᵀV), sin_distance(U, V)² =
            // 1 − σ_min(UᵀV)², and the distance from the complement of U to
            // V is ‖Π_U V‖₂ itself.
            let u = random_basis(d, k, &entries);
            let v = random_basis(d, k, &entries[20..]);
            let f = fairness_spectral_norm(&u, &v).unwrap();
            let comp = crate::oracle::orthogonal_complement(&u).unwrap();
            prop_assert!((sin_distance(&comp, &v).unwrap() - f).abs() <= 1e-8);
            if k == 1 {
                let s = sin_distance(&u, &v).unwrap();
                prop_assert!((f * f + s * s - 1.0).abs() <= 1e-8);
            }
            let cross = u.columns().t_matmul(v.columns()).unwrap();
            let svals = crate::linalg::symmetric_eig(&cross.t_matmul(&cross).unwrap(), crate::linalg::EigenOrder::ByValue).unwrap();
            let smin = svals.last().unwrap().value.max(0.0).sqrt();
            let sd = sin_distance(&u, &v).unwrap();
            prop_assert!((sd * sd - (1.0 - smin * smin)).abs() <= 1e-8);
            prop_assert!((f - svals[0].value.max(0.0).sqrt()).abs() <= 1e-8);
        }

        #[test]
        fn scaling_sigma(c in 0.01f64..100.0, entries in proptest::collection::vec(-1.0f64..1.0, 36)) {
            let a = DenseMatrix::from_row_major(4, 4, entries[..16].to_vec()).unwrap();
            let sigma = a.t_matmul(&a).unwrap();
            let v = random_basis(4, 2, &entries[16..]);
            let (x, p) = explained_variance(&v, &sigma).unwrap();
            let (y, q) = explained_variance(&v, &sigma.scaled(c)).unwrap();
            prop_assert!((y - c * x).abs() <= 1e-10 * (c * x).abs().max(1e-300));
            prop_assert!((p - q).abs() <= 1e-10 * p.abs().max(1e-300));
        }
    }
}
