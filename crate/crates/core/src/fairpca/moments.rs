use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec::{Accumulator, ChunkedSum, Execution};
use crate::fairpca::iterate::add_outer_product;
use crate::linalg::{axpy, DenseMatrix, OrthonormalBasis};
use crate::stream::LabeledSample;

/// Per-group statistics of a binary-attribute stream.
///
/// The running part covers every block absorbed so far; the block part
/// describes the most recent block only. A group absent from a block has
/// zero block count, mean and product, and its running values are left
/// untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMoments {
    pub running_count: [u64; 2],
    pub running_mean: [Vec<f64>; 2],
    pub block_count: [u64; 2],
    pub block_mean: [Vec<f64>; 2],
    /// Mean of `x (xᵀ W)` over the group's samples in the block (`d × m`).
    pub block_product: [DenseMatrix; 2],
}

impl GroupMoments {
    pub fn new(dim: usize, rank: usize) -> Self {
        GroupMoments {
            running_count: [0; 2],
            running_mean: [vec![0.0; dim], vec![0.0; dim]],
            block_count: [0; 2],
            block_mean: [vec![0.0; dim], vec![0.0; dim]],
            block_product: [DenseMatrix::zeros(dim, rank), DenseMatrix::zeros(dim, rank)],
        }
    }

    pub fn dim(&self) -> usize {
        self.running_mean[0].len()
    }

    /// Replaces the block quantities with the averages of `sums` and folds
    /// the block means into the running means.
    pub fn absorb(&mut self, sums: BinaryBlockSums) {
        let BinaryBlockSums {
            count,
            sum,
            product,
            ..
        } = sums;
        for (a, ((s, p), &b)) in sum.into_iter().zip(product).zip(&count).enumerate() {
            self.block_count[a] = b;
            if b == 0 {
                self.block_mean[a].iter_mut().for_each(|v| *v = 0.0);
                self.block_product[a].fill_zero();
                continue;
            }
            let inv = 1.0 / b as f64;
            self.block_mean[a] = s;
            self.block_mean[a].iter_mut().for_each(|v| *v *= inv);
            self.block_product[a] = p;
            self.block_product[a].scale(inv);
            fold_running_mean(
                &mut self.running_mean[a],
                &mut self.running_count[a],
                &self.block_mean[a],
                b,
            );
        }
    }
}

/// `m̄ ← (B/(B+b)) m̄ + (b/(B+b)) m_t`, `B ← B + b`.
pub(crate) fn fold_running_mean(mean: &mut [f64], count: &mut u64, block_mean: &[f64], b: u64) {
    if b == 0 {
        return;
    }
    let total = (*count + b) as f64;
    let keep = *count as f64 / total;
    mean.iter_mut().for_each(|v| *v *= keep);
    axpy(b as f64 / total, block_mean, mean);
    *count += b;
}

/// Raw per-group sums of one block: counts, `Σ x`, and `Σ x (xᵀ W)`.
#[derive(Debug, Clone)]
pub struct BinaryBlockSums {
    w: Arc<DenseMatrix>,
    count: [u64; 2],
    sum: [Vec<f64>; 2],
    product: [DenseMatrix; 2],
    scratch: Vec<f64>,
}

impl BinaryBlockSums {
    pub fn new(w: Arc<DenseMatrix>) -> Self {
        let (d, m) = w.shape();
        BinaryBlockSums {
            count: [0; 2],
            sum: [vec![0.0; d], vec![0.0; d]],
            product: [DenseMatrix::zeros(d, m), DenseMatrix::zeros(d, m)],
            scratch: vec![0.0; m],
            w,
        }
    }
}

impl Accumulator for BinaryBlockSums {
    type Item = LabeledSample;

    fn add(&mut self, s: &LabeledSample) {
        let a = s.group();
        self.count[a] += 1;
        axpy(1.0, &s.features, &mut self.sum[a]);
        add_outer_product(&mut self.product[a], &self.w, &s.features, &mut self.scratch);
    }

    fn merge(&mut self, other: &Self) {
        for a in 0..2 {
            self.count[a] += other.count[a];
            axpy(1.0, &other.sum[a], &mut self.sum[a]);
            axpy(1.0, other.product[a].as_slice(), self.product[a].as_mut_slice());
        }
    }

    fn reset(&mut self) {
        self.count = [0; 2];
        for a in 0..2 {
            self.sum[a].iter_mut().for_each(|v| *v = 0.0);
            self.product[a].fill_zero();
        }
    }
}

/// Computes the block quantities of `block` against `w` and folds them
/// into `moments`.
pub fn update_block_moments(
    block: &[LabeledSample],
    w: &OrthonormalBasis,
    moments: &mut GroupMoments,
) -> Result<()> {
    let d = moments.dim();
    if w.ambient_dim() != d || w.rank() != moments.block_product[0].cols() {
        return Err(Error::DimensionMismatch(format!(
            "basis is {}x{}, moments track dimension {d} and rank {}",
            w.ambient_dim(),
            w.rank(),
            moments.block_product[0].cols()
        )));
    }
    for s in block {
        if s.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "sample of dimension {} for moments of dimension {d}",
                s.dim()
            )));
        }
        if s.attributes.len() != 1 || s.group() > 1 {
            return Err(Error::SchemaViolation(format!(
                "expected one binary attribute, got {:?}",
                s.attributes
            )));
        }
    }
    let mut sums = ChunkedSum::new(
        BinaryBlockSums::new(Arc::new(w.columns().clone())),
        Execution::Sequential,
    );
    sums.extend(block);
    moments.absorb(sums.finish());
    Ok(())
}
