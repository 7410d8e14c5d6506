//! Exact offline fair PCA on in-memory data or on a synthetic population.
//!
//! Here `d × d` matrices are formed freely. The unfair basis is the top-`m`
//! eigenvectors of `S = M¹ − M⁰` by magnitude, plus the part of the mean gap
//! `f` they miss; the fair loading is the top-`k` eigenspace of `Σ`
//! restricted to the orthogonal complement of that basis.

use crate::error::{Error, Result};
use crate::fairpca::{
    multi_width, FairPcaModel, FitMethod, ModelConfig, OfflineConfig, UnfairRank, UnfairSubspace,
};
use crate::linalg::{
    axpy, leading_basis, qr_rank_revealing, qr_rank_revealing_abs, symmetric_eig, DenseMatrix, EigenOrder,
    OrthonormalBasis,
};
use crate::stream::{AttributeSchema, LabeledSample, SyntheticSpec};

/// Group and pooled moments of a binary-attribute dataset or population.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineStats {
    pub dim: usize,
    /// Sample counts per group; zero for a population.
    pub counts: [u64; 2],
    /// Share of group 1.
    pub proportion: f64,
    pub means: [Vec<f64>; 2],
    /// `M_a = E[xxᵀ | a]`
    pub second_moments: [DenseMatrix; 2],
    pub pooled_mean: Vec<f64>,
    /// Pooled second moment, or the pooled covariance when `centered`.
    pub sigma: DenseMatrix,
    pub centered: bool,
}

impl OfflineStats {
    /// `f = μ¹ − μ⁰`
    pub fn mean_gap(&self) -> Vec<f64> {
        self.means[1].iter().zip(&self.means[0]).map(|(a, b)| a - b).collect()
    }

    /// `S = M¹ − M⁰`
    pub fn moment_gap(&self) -> DenseMatrix {
        self.second_moments[1]
            .sub(&self.second_moments[0])
            .expect("group moments share a shape")
    }

    /// Within-group covariance `M_a − μ_a μ_aᵀ`.
    pub fn group_covariance(&self, a: usize) -> DenseMatrix {
        let mut c = self.second_moments[a].clone();
        let mu = &self.means[a];
        for i in 0..self.dim {
            for j in 0..self.dim {
                c.set(i, j, c.get(i, j) - mu[i] * mu[j]);
            }
        }
        c
    }
}

fn add_outer(m: &mut DenseMatrix, x: &[f64], weight: f64) {
    let d = x.len();
    let data = m.as_mut_slice();
    for i in 0..d {
        axpy(weight * x[i], x, &mut data[i * d..(i + 1) * d]);
    }
}

/// Exact moments of a binary-attribute dataset (group = first attribute).
/// `Σ` is the pooled uncentered second moment.
pub fn offline_statistics(data: &[LabeledSample]) -> Result<OfflineStats> {
    statistics(data, false)
}

/// As [`offline_statistics`] with `Σ` the pooled covariance about the
/// pooled mean.
pub fn offline_statistics_centered(data: &[LabeledSample]) -> Result<OfflineStats> {
    statistics(data, true)
}

fn statistics(data: &[LabeledSample], centered: bool) -> Result<OfflineStats> {
    let d = data.first().map(|s| s.dim()).unwrap_or(0);
    let mut counts = [0u64; 2];
    let mut sums = [vec![0.0; d], vec![0.0; d]];
    let mut moments = [DenseMatrix::zeros(d, d), DenseMatrix::zeros(d, d)];
    for (i, s) in data.iter().enumerate() {
        if s.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "sample {} has dimension {}, expected {d}",
                i + 1,
                s.dim()
            )));
        }
        let a = s.group();
        if a > 1 {
            return Err(Error::SchemaViolation(format!("group index {a} in binary data")));
        }
        counts[a] += 1;
        axpy(1.0, &s.features, &mut sums[a]);
        add_outer(&mut moments[a], &s.features, 1.0);
    }
    for (a, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::GroupStarvation(format!("group {a} has no samples")));
        }
    }
    let n = (counts[0] + counts[1]) as f64;
    let mut pooled_mean = sums[0].clone();
    axpy(1.0, &sums[1], &mut pooled_mean);
    pooled_mean.iter_mut().for_each(|v| *v /= n);
    let mut sigma = moments[0].add(&moments[1])?;
    sigma.scale(1.0 / n);
    if centered {
        add_outer(&mut sigma, &pooled_mean, -1.0);
    }
    let means = [0, 1].map(|a| sums[a].iter().map(|v| v / counts[a] as f64).collect::<Vec<_>>());
    let [m0, m1] = moments;
    Ok(OfflineStats {
        dim: d,
        counts,
        proportion: counts[1] as f64 / n,
        means,
        second_moments: [m0.scaled(1.0 / counts[0] as f64), m1.scaled(1.0 / counts[1] as f64)],
        pooled_mean,
        sigma,
        centered,
    })
}

/// Exact population moments of a synthetic spec:
/// `M_a = Σ_a + μ_a μ_aᵀ`, `Σ = p M¹ + (1 − p) M⁰`.
pub fn population_statistics(spec: &SyntheticSpec) -> Result<OfflineStats> {
    let covs = spec.covariances()?;
    let means = spec.means();
    let second_moments = [0, 1].map(|a| {
        let mut m = covs[a].clone();
        add_outer(&mut m, &means[a], 1.0);
        m
    });
    let p = spec.p;
    let sigma = second_moments[1].scaled(p).add(&second_moments[0].scaled(1.0 - p))?;
    let mut pooled_mean = means[1].iter().map(|v| p * v).collect::<Vec<_>>();
    axpy(1.0 - p, &means[0], &mut pooled_mean);
    Ok(OfflineStats {
        dim: spec.dim,
        counts: [0, 0],
        proportion: p,
        means,
        second_moments,
        pooled_mean,
        sigma,
        centered: false,
    })
}

/// `[P_m | g/‖g‖]` or `P_m`, where `P_m` holds the top-`m` eigenvectors of
/// `S` by `|λ|` and `g = f − P_m P_mᵀ f`.
pub fn offline_unfair_subspace(stats: &OfflineStats, m: usize, g_threshold: f64) -> Result<UnfairSubspace> {
    if m >= stats.dim {
        return Err(Error::DimensionBudget(format!("m = {m} must be below d = {}", stats.dim)));
    }
    let w = if m == 0 {
        OrthonormalBasis::empty(stats.dim)
    } else {
        let pairs = symmetric_eig(&stats.moment_gap(), EigenOrder::ByMagnitude)?;
        leading_basis(&pairs, m)?
    };
    let mut u = UnfairSubspace::from_parts(w, stats.mean_gap(), g_threshold)?;
    u.samples_consumed = stats.counts[0] + stats.counts[1];
    Ok(u)
}

/// Orthonormal basis of `col(u)⊥`.
pub fn orthogonal_complement(u: &OrthonormalBasis) -> Result<OrthonormalBasis> {
    let d = u.ambient_dim();
    let r = u.rank();
    let stacked = DenseMatrix::hstack(&[u.columns(), &DenseMatrix::identity(d)])?;
    let report = qr_rank_revealing(&stacked, 1e-10)?;
    let keep: Vec<usize> = (r..report.basis.rank()).collect();
    OrthonormalBasis::try_new(report.basis.columns().select_columns(&keep))
}

/// Top-`k` eigenspace of `Π⊥ Σ Π⊥` with `Π⊥` the projector off `u`, and its
/// objective `tr(Vᵀ Σ V)`.
///
/// The eigenproblem is solved in coordinates of `col(u)⊥`, so the result
/// is exactly orthogonal to `u` even when `Σ` has zero eigenvalues there.
pub fn fair_pca_given(sigma: &DenseMatrix, u: &OrthonormalBasis, k: usize) -> Result<(OrthonormalBasis, f64)> {
    let d = sigma.rows();
    if u.ambient_dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "basis in dimension {}, covariance is {d}x{d}",
            u.ambient_dim()
        )));
    }
    if k == 0 || k + u.rank() > d {
        return Err(Error::DimensionBudget(format!(
            "k + m' = {} + {} must lie in 1..={d}",
            k,
            u.rank()
        )));
    }
    let q = orthogonal_complement(u)?;
    let reduced = q.columns().t_matmul(&sigma.matmul(q.columns())?)?;
    let pairs = symmetric_eig(&reduced, EigenOrder::ByValue)?;
    let top = leading_basis(&pairs, k)?;
    let v = OrthonormalBasis::from_orthonormal_columns(q.columns().matmul(top.columns())?);
    let objective = trace_quadratic(sigma, &v)?;
    Ok((v, objective))
}

/// `tr(Vᵀ Σ V)`
pub fn trace_quadratic(sigma: &DenseMatrix, v: &OrthonormalBasis) -> Result<f64> {
    Ok(v.columns().t_matmul(&sigma.matmul(v.columns())?)?.trace())
}

/// Exact fair PCA: unfair basis of rank `m` (plus the mean direction when
/// needed), then the top-`k` deflated eigenspace. Returns `(U, V⋆, objective)`.
pub fn offline_fair_pca(
    stats: &OfflineStats,
    m: usize,
    k: usize,
    g_threshold: f64,
) -> Result<(UnfairSubspace, OrthonormalBasis, f64)> {
    let unfair = offline_unfair_subspace(stats, m, g_threshold)?;
    let (v, objective) = fair_pca_given(&stats.sigma, &unfair.basis, k)?;
    Ok((unfair, v, objective))
}

/// Top-`k` eigenvectors of `Σ`.
pub fn vanilla_pca(stats: &OfflineStats, k: usize) -> Result<OrthonormalBasis> {
    if k == 0 || k >= stats.dim {
        return Err(Error::InvalidConfig(format!("vanilla PCA needs 1 <= k < d = {}, got k = {k}", stats.dim)));
    }
    leading_basis(&symmetric_eig(&stats.sigma, EigenOrder::ByValue)?, k)
}

/// Offline counterpart of a streaming model, in the same file format.
pub fn offline_model(stats: &OfflineStats, m: usize, k: usize, g_threshold: f64) -> Result<FairPcaModel> {
    let (unfair, loading, _) = offline_fair_pca(stats, m, k, g_threshold)?;
    Ok(FairPcaModel {
        loading,
        samples_consumed: stats.counts[0] + stats.counts[1],
        unfair,
        config: ModelConfig::Offline(OfflineConfig {
            k,
            m: UnfairRank::Single(m),
            g_threshold,
            centered: stats.centered,
        }),
        method: FitMethod::Offline,
    })
}

/// Unconstrained PCA in the model file format, with an empty unfair basis.
pub fn vanilla_model(stats: &OfflineStats, k: usize) -> Result<FairPcaModel> {
    let loading = vanilla_pca(stats, k)?;
    let empty = OrthonormalBasis::empty(stats.dim);
    let mean_gap = stats.mean_gap();
    Ok(FairPcaModel {
        loading,
        samples_consumed: stats.counts[0] + stats.counts[1],
        unfair: UnfairSubspace {
            basis: empty.clone(),
            second_moment_basis: empty,
            residual_gap_norm: crate::linalg::norm2(&mean_gap),
            mean_gap,
            mean_direction_included: false,
            cell_mean_gaps: Vec::new(),
            samples_consumed: stats.counts[0] + stats.counts[1],
        },
        config: ModelConfig::Offline(OfflineConfig {
            k,
            m: UnfairRank::Single(0),
            g_threshold: 0.0,
            centered: stats.centered,
        }),
        method: FitMethod::Vanilla,
    })
}

/// Eigenvalues at or below this fraction of the cell's moment scale count
/// as zero in the one-vs-rest oracle.
const NULL_EIGEN_TOL: f64 = 1e-12;

/// Exact one-vs-rest unfair subspace: for every (attribute, group) cell the
/// top-`m_r` eigenvectors of `M_in − M_out` by magnitude (null directions
/// excluded) and the mean gap `μ_in − μ_out`; the result is the QR of the
/// concatenation with redundant columns dropped.
pub fn offline_unfair_subspace_multi(
    data: &[LabeledSample],
    schema: &AttributeSchema,
    ranks: &[usize],
    g_threshold: f64,
) -> Result<UnfairSubspace> {
    let d = data.first().map(|s| s.dim()).unwrap_or(0);
    if ranks.len() != schema.attribute_count() {
        return Err(Error::InvalidConfig(format!(
            "{} ranks for {} attributes",
            ranks.len(),
            schema.attribute_count()
        )));
    }
    let width = multi_width(ranks, schema);
    if d <= width {
        return Err(Error::DimensionBudget(format!(
            "d = {d} must exceed sum_r g_r (m_r + 1) = {width}"
        )));
    }
    for s in data {
        schema.check(&s.attributes)?;
        if s.dim() != d {
            return Err(Error::DimensionMismatch("samples of differing dimension".into()));
        }
    }
    let mut w_cols: Vec<DenseMatrix> = Vec::new();
    let mut gaps = Vec::new();
    for (r, (&g, &m)) in schema.group_counts().iter().zip(ranks).enumerate() {
        for a in 0..g {
            let mut count = [0u64; 2];
            let mut sum = [vec![0.0; d], vec![0.0; d]];
            let mut mom = [DenseMatrix::zeros(d, d), DenseMatrix::zeros(d, d)];
            for s in data {
                let side = usize::from(s.attributes[r] != a);
                count[side] += 1;
                axpy(1.0, &s.features, &mut sum[side]);
                add_outer(&mut mom[side], &s.features, 1.0);
            }
            if count.contains(&0) {
                return Err(Error::GroupStarvation(format!(
                    "attribute {} group {a}: one side of the contrast is empty",
                    r + 1
                )));
            }
            let mean = [0, 1].map(|side| sum[side].iter().map(|v| v / count[side] as f64).collect::<Vec<_>>());
            gaps.push(mean[0].iter().zip(&mean[1]).map(|(x, y)| x - y).collect::<Vec<f64>>());
            if m == 0 {
                continue;
            }
            let m_in = mom[0].scaled(1.0 / count[0] as f64);
            let m_out = mom[1].scaled(1.0 / count[1] as f64);
            let scale = m_in.max_abs().max(m_out.max_abs());
            let pairs = symmetric_eig(&m_in.sub(&m_out)?, EigenOrder::ByMagnitude)?;
            let live: Vec<_> = pairs
                .into_iter()
                .take(m)
                .filter(|p| p.value.abs() > NULL_EIGEN_TOL * scale)
                .collect();
            if !live.is_empty() {
                w_cols.push(leading_basis(&live, live.len())?.into_columns());
            }
        }
    }
    let gap_cols = gaps.iter().map(|f| DenseMatrix::column_vector(f)).collect::<Result<Vec<_>>>()?;
    let w_refs: Vec<&DenseMatrix> = w_cols.iter().collect();
    let w_all = if w_refs.is_empty() {
        DenseMatrix::zeros(d, 0)
    } else {
        DenseMatrix::hstack(&w_refs)?
    };
    let mut blocks = w_refs.clone();
    blocks.extend(gap_cols.iter());
    let all = DenseMatrix::hstack(&blocks)?;
    let report = qr_rank_revealing_abs(&all, g_threshold * all.max_column_norm().max(1.0))?;
    let w_basis = qr_rank_revealing_abs(&w_all, g_threshold * w_all.max_column_norm().max(1.0))?.basis;
    let mut residual: f64 = 0.0;
    for f in &gaps {
        let g = crate::linalg::project_out_vec(&w_basis, f)?;
        residual = residual.max(crate::linalg::norm2(&g));
    }
    Ok(UnfairSubspace {
        mean_direction_included: report.kept.iter().any(|&j| j >= w_all.cols()),
        basis: report.basis,
        second_moment_basis: w_basis,
        mean_gap: gaps[1].clone(),
        residual_gap_norm: residual,
        cell_mean_gaps: gaps,
        samples_consumed: data.len() as u64,
    })
}

/// Pooled uncentered second moment `(1/n) Σ xxᵀ` of any dataset.
pub fn pooled_second_moment(data: &[LabeledSample]) -> Result<DenseMatrix> {
    let d = data.first().map(|s| s.dim()).ok_or(Error::InsufficientData {
        needed: 1,
        available: 0,
    })?;
    let mut sigma = DenseMatrix::zeros(d, d);
    for s in data {
        if s.dim() != d {
            return Err(Error::DimensionMismatch("samples of differing dimension".into()));
        }
        add_outer(&mut sigma, &s.features, 1.0);
    }
    sigma.scale(1.0 / data.len() as f64);
    Ok(sigma)
}

/// One-vs-rest counterpart of [`offline_model`]; `Σ` is the pooled
/// uncentered second moment of `data`.
pub fn offline_model_multi(
    data: &[LabeledSample],
    schema: &AttributeSchema,
    ranks: &[usize],
    k: usize,
    g_threshold: f64,
) -> Result<FairPcaModel> {
    let unfair = offline_unfair_subspace_multi(data, schema, ranks, g_threshold)?;
    let sigma = pooled_second_moment(data)?;
    let (loading, _) = fair_pca_given(&sigma, &unfair.basis, k)?;
    Ok(FairPcaModel {
        loading,
        samples_consumed: data.len() as u64,
        unfair,
        config: ModelConfig::Offline(OfflineConfig {
            k,
            m: UnfairRank::PerAttribute(ranks.to_vec()),
            g_threshold,
            centered: false,
        }),
        method: FitMethod::Offline,
    })
}
