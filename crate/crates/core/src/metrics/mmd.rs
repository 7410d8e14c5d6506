//! Squared maximum mean discrepancy between two sets of projected rows.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::DenseMatrix;

/// Largest pooled sample used to estimate the median pairwise distance.
pub const MEDIAN_SUBSAMPLE: usize = 2000;

const MEDIAN_SEED: u64 = 0x6d6d_645f_6d65_6469;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    MedianHeuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    /// `exp(−‖x − y‖² / 2σ²)`
    Rbf { bandwidth: Bandwidth },
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::Rbf {
            bandwidth: Bandwidth::MedianHeuristic,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmdEstimator {
    /// V-statistic, every pair including `i = j`; clamped at zero.
    #[default]
    Biased,
    /// U-statistic, within-group diagonals excluded; may be negative.
    Unbiased,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median Euclidean distance over distinct pairs of the pooled rows of
/// `g0` and `g1`. Pools larger than [`MEDIAN_SUBSAMPLE`] are subsampled
/// with a fixed seed. Returns 1 when the median is zero.
pub fn median_heuristic_bandwidth(g0: &DenseMatrix, g1: &DenseMatrix) -> Result<f64> {
    if g0.cols() != g1.cols() {
        return Err(Error::DimensionMismatch(format!(
            "groups have {} and {} columns",
            g0.cols(),
            g1.cols()
        )));
    }
    let n = g0.rows() + g1.rows();
    let row = |i: usize| if i < g0.rows() { g0.row(i) } else { g1.row(i - g0.rows()) };
    let picked: Vec<usize> = if n > MEDIAN_SUBSAMPLE {
        let mut rng = ChaCha8Rng::seed_from_u64(MEDIAN_SEED);
        let mut idx = sample(&mut rng, n, MEDIAN_SUBSAMPLE).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let mut dists = Vec::with_capacity(picked.len() * picked.len().saturating_sub(1) / 2);
    for (a, &i) in picked.iter().enumerate() {
        for &j in &picked[a + 1..] {
            dists.push(squared_distance(row(i), row(j)).sqrt());
        }
    }
    if dists.is_empty() {
        return Ok(1.0);
    }
    let mid = dists.len() / 2;
    let (_, median, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let median = *median;
    Ok(if median > 0.0 && median.is_finite() { median } else { 1.0 })
}

/// Sum of `k(xᵢ, yⱼ)` over all pairs, optionally skipping `i = j`.
fn kernel_sum(x: &DenseMatrix, y: &DenseMatrix, gamma: f64, skip_diagonal: bool, exec: Execution) -> f64 {
    let rows = exec.map_indexed(x.rows(), |i| {
        let xi = x.row(i);
        let mut s = 0.0;
        for j in 0..y.rows() {
            if skip_diagonal && i == j {
                continue;
            }
            s += (-gamma * squared_distance(xi, y.row(j))).exp();
        }
        s
    });
    rows.iter().sum()
}

fn column_means(x: &DenseMatrix) -> Vec<f64> {
    let mut mean = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    let n = x.rows() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn self_inner_sum(x: &DenseMatrix) -> f64 {
    (0..x.rows()).map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>()).sum()
}

/// MMD² between the rows of `g0` and the rows of `g1`.
pub fn mmd_squared(
    g0: &DenseMatrix,
    g1: &DenseMatrix,
    kernel: Kernel,
    estimator: MmdEstimator,
    exec: Execution,
) -> Result<f64> {
    if g0.rows() == 0 || g1.rows() == 0 {
        return Err(Error::EmptyGroup(format!(
            "MMD needs samples in both groups, got {} and {}",
            g0.rows(),
            g1.rows()
        )));
    }
    if g0.cols() != g1.cols() {
        return Err(Error::DimensionMismatch(format!(
            "groups have {} and {} columns",
            g0.cols(),
            g1.cols()
        )));
    }
    let unbiased = estimator == MmdEstimator::Unbiased;
    if unbiased && (g0.rows() < 2 || g1.rows() < 2) {
        return Err(Error::EmptyGroup(format!(
            "the unbiased estimator needs two samples per group, got {} and {}",
            g0.rows(),
            g1.rows()
        )));
    }
    let (n0, n1) = (g0.rows() as f64, g1.rows() as f64);
    let value = match kernel {
        Kernel::Linear => {
            let (m0, m1) = (column_means(g0), column_means(g1));
            let gap: f64 = m0.iter().zip(&m1).map(|(a, b)| (a - b) * (a - b)).sum();
            if unbiased {
                // Σ_{i≠j} xᵢ·xⱼ = ‖Σ xᵢ‖² − Σ ‖xᵢ‖²
                let within = |m: &[f64], x: &DenseMatrix, n: f64| {
                    let total: f64 = m.iter().map(|v| v * v * n * n).sum();
                    (total - self_inner_sum(x)) / (n * (n - 1.0))
                };
                let cross: f64 = m0.iter().zip(&m1).map(|(a, b)| a * b).sum();
                within(&m0, g0, n0) + within(&m1, g1, n1) - 2.0 * cross
            } else {
                gap
            }
        }
        Kernel::Rbf { bandwidth } => {
            let sigma = match bandwidth {
                Bandwidth::Fixed(s) if s > 0.0 && s.is_finite() => s,
                Bandwidth::Fixed(s) => return Err(Error::InvalidConfig(format!("RBF bandwidth must be positive, got {s}"))),
                Bandwidth::MedianHeuristic => median_heuristic_bandwidth(g0, g1)?,
            };
            let gamma = 1.0 / (2.0 * sigma * sigma);
            let (p00, p11) = if unbiased { (n0 * (n0 - 1.0), n1 * (n1 - 1.0)) } else { (n0 * n0, n1 * n1) };
            let k00 = kernel_sum(g0, g0, gamma, unbiased, exec) / p00;
            let k11 = kernel_sum(g1, g1, gamma, unbiased, exec) / p11;
            let k01 = kernel_sum(g0, g1, gamma, false, exec) / (n0 * n1);
            k00 + k11 - 2.0 * k01
        }
    };
    Ok(if unbiased { value } else { value.max(0.0) })
}
