use std::sync::Arc;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::ChunkedSum;
use crate::fairpca::config::FnpmConfig;
use crate::fairpca::iterate::{gaussian_matrix, ingest_block, orthonormalize_with_restarts};
use crate::fairpca::moments::{BinaryBlockSums, GroupMoments};
use crate::linalg::{norm2, project_out_vec, DenseMatrix, OrthonormalBasis};
use crate::stream::SampleStream;

/// Estimated basis of the directions along which the groups differ in mean
/// or second moment.
#[derive(Debug, Clone, PartialEq)]
pub struct UnfairSubspace {
    /// `Û`, `d × m′`.
    pub basis: OrthonormalBasis,
    /// Second-moment part `Ŵ` (`d × m`).
    pub second_moment_basis: OrthonormalBasis,
    /// `f̂ = m̄¹ − m̄⁰`.
    pub mean_gap: Vec<f64>,
    /// `‖ĝ‖` where `ĝ = f̂ − Ŵ Ŵᵀ f̂`.
    pub residual_gap_norm: f64,
    pub mean_direction_included: bool,
    /// One-vs-rest mean gaps per (attribute, group) cell; empty for
    /// single-attribute fits.
    pub cell_mean_gaps: Vec<Vec<f64>>,
    pub samples_consumed: u64,
}

impl UnfairSubspace {
    pub fn dim(&self) -> usize {
        self.basis.ambient_dim()
    }

    /// `m′`
    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    /// Builds `[W | ĝ/‖ĝ‖]` or `W` from a second-moment basis and a mean gap.
    pub fn from_parts(w: OrthonormalBasis, mean_gap: Vec<f64>, g_threshold: f64) -> Result<Self> {
        // Projecting twice keeps ĝ orthogonal to W to working precision
        // even when f̂ lies almost entirely inside col(W).
        let g = project_out_vec(&w, &project_out_vec(&w, &mean_gap)?)?;
        let g_norm = norm2(&g);
        let include = g_norm > g_threshold * norm2(&mean_gap).max(1.0);
        let basis = if include {
            let unit: Vec<f64> = g.iter().map(|v| v / g_norm).collect();
            let col = DenseMatrix::column_vector(&unit)?;
            OrthonormalBasis::from_orthonormal_columns(DenseMatrix::hstack(&[w.columns(), &col])?)
        } else {
            w.clone()
        };
        Ok(UnfairSubspace {
            basis,
            second_moment_basis: w,
            mean_gap,
            residual_gap_norm: g_norm,
            mean_direction_included: include,
            cell_mean_gaps: Vec::new(),
            samples_consumed: 0,
        })
    }
}

/// First phase: `T` blocks of `b` samples drive a power iteration on the
/// second-moment gap `C¹ − C⁰`; the group means accumulate alongside.
///
/// With `m = 0` no iteration state is kept and the result is the mean-only
/// basis `[f̂/‖f̂‖]` (or empty when `f̂` is negligible).
pub fn estimate_unfair_subspace<S: SampleStream + ?Sized>(
    stream: &mut S,
    cfg: &FnpmConfig,
) -> Result<UnfairSubspace> {
    cfg.validate()?;
    if !stream.schema().is_binary() {
        return Err(Error::SchemaViolation(format!(
            "the single-attribute estimator needs one binary attribute, schema has groups {:?}",
            stream.schema().group_counts()
        )));
    }
    let d = stream.dim();
    let m = cfg.m.single()?;
    if m >= d {
        return Err(Error::DimensionBudget(format!("m = {m} must be below d = {d}")));
    }
    let needed = (cfg.iters_t as u64) * (cfg.block_b as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut w = if m > 0 {
        orthonormalize_with_restarts(gaussian_matrix(&mut rng, d, m), None, &mut rng, 0)?
    } else {
        OrthonormalBasis::empty(d)
    };

    let mut moments = GroupMoments::new(d, m);
    let mut consumed = 0u64;
    let mut degenerate = 0usize;
    let mut scale = 0.0f64;
    for t in 1..=cfg.iters_t {
        let mut sums = ChunkedSum::new(BinaryBlockSums::new(Arc::new(w.columns().clone())), cfg.execution);
        ingest_block(stream, cfg.block_b, &mut sums, cfg.execution, &mut consumed, needed)?;
        moments.absorb(sums.finish());
        if m == 0 {
            continue;
        }
        let gap = moments.block_product[1].sub(&moments.block_product[0])?;
        let gap_norm = gap.frobenius_norm();
        scale = scale
            .max(moments.block_product[0].frobenius_norm())
            .max(moments.block_product[1].frobenius_norm());
        if gap_norm <= cfg.degenerate_threshold * scale {
            degenerate += 1;
        }
        debug!("phase 1 iteration {t}: |C1 - C0|_F = {gap_norm:e}");
        w = orthonormalize_with_restarts(gap, None, &mut rng, t)?;
    }

    for a in 0..2 {
        if moments.running_count[a] == 0 {
            return Err(Error::GroupStarvation(format!(
                "group {a} received no samples in {consumed} draws"
            )));
        }
    }
    if m > 0 && 2 * degenerate >= cfg.iters_t {
        return Err(Error::DegenerateGap {
            degenerate,
            iterations: cfg.iters_t,
        });
    }

    let [m0, m1] = &moments.running_mean;
    let f: Vec<f64> = m1.iter().zip(m0).map(|(a, b)| a - b).collect();
    let mut out = UnfairSubspace::from_parts(w, f, cfg.g_threshold)?;
    out.samples_consumed = consumed;
    info!(
        "unfair subspace: rank {} (mean direction {}), |g| = {:e}, group counts {:?}",
        out.rank(),
        if out.mean_direction_included { "included" } else { "absorbed" },
        out.residual_gap_norm,
        moments.running_count
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sin_distance;
    use crate::stream::{AttributeSchema, CyclingStream, LabeledSample, VecStream};

    fn cycling(points: &[(usize, [f64; 2])]) -> CyclingStream {
        let samples = points.iter().map(|(a, x)| LabeledSample::binary(*a, x.to_vec())).collect();
        CyclingStream::new(AttributeSchema::binary(), samples).unwrap()
    }

    #[test]
    fn alternating_points_span_the_plane() {
        let mut s = cycling(&[(0, [1.0, 0.0]), (1, [0.0, 2.0])]);
        let cfg = FnpmConfig::new(1, 1, 2, 2, 3, 1);
        let u = estimate_unfair_subspace(&mut s, &cfg).unwrap();
        // S = diag(−1, 4) and f = (−1, 2) ∉ col(P₁) = span e2.
        assert!(u.mean_direction_included);
        assert_eq!(u.rank(), 2);
        assert_eq!(u.mean_gap, vec![-1.0, 2.0]);
        assert!(u.basis.orthonormality_defect() < 1e-10);
        assert_eq!(u.samples_consumed, 6);
        let plane = OrthonormalBasis::standard(2, &[0, 1]).unwrap();
        assert!(sin_distance(&u.basis, &plane).unwrap() < 1e-12);
    }

    #[test]
    fn mean_gap_inside_second_moment_span() {
        let mut s = cycling(&[(0, [1.0, 0.0]), (0, [-1.0, 0.0]), (1, [2.0, 1.0]), (1, [0.0, 1.0])]);
        let cfg = FnpmConfig::new(1, 1, 4, 4, 3, 1);
        let u = estimate_unfair_subspace(&mut s, &cfg).unwrap();
        assert!(!u.mean_direction_included);
        assert_eq!(u.rank(), 1);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let p = u.basis.column(0);
        assert!((p[0].abs() - r).abs() < 1e-12 && (p[1] - p[0]).abs() < 1e-12);
    }

    #[test]
    fn mean_only_variant() {
        let mut s = cycling(&[(0, [1.0, 0.0]), (1, [0.0, 2.0])]);
        let u = estimate_unfair_subspace(&mut s, &FnpmConfig::new(1, 0, 2, 2, 1, 1)).unwrap();
        assert_eq!(u.rank(), 1);
        assert_eq!(u.second_moment_basis.rank(), 0);
        let n = 5f64.sqrt();
        assert!((u.basis.column(0)[0] + 1.0 / n).abs() < 1e-15);
        // Identical group means: nothing to remove.
        let mut s = cycling(&[(0, [1.0, 0.0]), (1, [1.0, 0.0])]);
        let u = estimate_unfair_subspace(&mut s, &FnpmConfig::new(1, 0, 2, 2, 1, 1)).unwrap();
        assert_eq!(u.rank(), 0);
    }

    #[test]
    fn errors() {
        let short = |n| {
            let samples = (0..n).map(|i| LabeledSample::binary(i % 2, vec![i as f64, 1.0, 0.0])).collect();
            VecStream::new(AttributeSchema::binary(), samples).unwrap()
        };
        let cfg = FnpmConfig::new(1, 1, 4, 4, 3, 1);
        match estimate_unfair_subspace(&mut short(10), &cfg) {
            Err(Error::InsufficientData { needed, available }) => assert_eq!((needed, available), (12, 10)),
            other => panic!("{other:?}"),
        }
        let mut one_group = cycling(&[(1, [1.0, 0.0]), (1, [0.0, 2.0])]);
        assert!(matches!(
            estimate_unfair_subspace(&mut one_group, &cfg),
            Err(Error::GroupStarvation(_))
        ));
        let mut same = cycling(&[(0, [1.0, 0.5]), (1, [1.0, 0.5])]);
        assert!(matches!(
            estimate_unfair_subspace(&mut same, &FnpmConfig::new(1, 1, 2, 2, 4, 1)),
            Err(Error::DegenerateGap { degenerate: 4, iterations: 4 })
        ));
        let multi = CyclingStream::new(
            AttributeSchema::new(vec![3]).unwrap(),
            vec![LabeledSample::binary(2, vec![1.0, 0.0])],
        )
        .unwrap();
        assert!(matches!(
            estimate_unfair_subspace(&mut { multi }, &cfg),
            Err(Error::SchemaViolation(_))
        ));
    }
}
