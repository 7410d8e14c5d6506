//! One-vs-rest estimator for several categorical attributes.
//!
//! Every (attribute `r`, group `a`) pair is a *cell*. A cell contrasts the
//! samples with `a_r = a` ("in") against those with `a_r ≠ a` ("out"): it
//! runs its own power iteration on `E[xxᵀ | in] − E[xxᵀ | out]` and tracks
//! the mean gap `m̄_in − m̄_out`. The unfair basis is the span of all cell
//! iterates and all cell mean gaps, with redundant columns dropped.

use std::sync::Arc;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{Accumulator, ChunkedSum};
use crate::fairpca::config::{multi_width, FnpmConfig};
use crate::fairpca::iterate::{add_outer_product, gaussian_matrix, ingest_block, orthonormalize_with_restarts};
use crate::fairpca::moments::fold_running_mean;
use crate::fairpca::unfair::UnfairSubspace;
use crate::linalg::{axpy, norm2, project_out_vec, qr_rank_revealing_abs, DenseMatrix, OrthonormalBasis};
use crate::stream::{AttributeSchema, LabeledSample, SampleStream};

const IN: usize = 0;
const OUT: usize = 1;

#[derive(Debug, Clone)]
struct CellSums {
    count: [u64; 2],
    sum: [Vec<f64>; 2],
    product: [DenseMatrix; 2],
}

/// Block sums for every cell, indexed attribute-major.
#[derive(Debug, Clone)]
pub struct MultiBlockSums {
    ws: Arc<Vec<DenseMatrix>>,
    first_cell: Arc<Vec<usize>>,
    cells: Vec<CellSums>,
    scratch: Vec<f64>,
}

impl MultiBlockSums {
    fn new(ws: Arc<Vec<DenseMatrix>>, first_cell: Arc<Vec<usize>>) -> Self {
        let cells = ws
            .iter()
            .map(|w| {
                let (d, m) = w.shape();
                CellSums {
                    count: [0; 2],
                    sum: [vec![0.0; d], vec![0.0; d]],
                    product: [DenseMatrix::zeros(d, m), DenseMatrix::zeros(d, m)],
                }
            })
            .collect();
        let widest = ws.iter().map(|w| w.cols()).max().unwrap_or(0);
        MultiBlockSums {
            ws,
            first_cell,
            cells,
            scratch: vec![0.0; widest],
        }
    }
}

impl Accumulator for MultiBlockSums {
    type Item = LabeledSample;

    fn add(&mut self, s: &LabeledSample) {
        let attrs = self.first_cell.len() - 1;
        for r in 0..attrs {
            let (lo, hi) = (self.first_cell[r], self.first_cell[r + 1]);
            for c in lo..hi {
                let side = if c - lo == s.attributes[r] { IN } else { OUT };
                let cell = &mut self.cells[c];
                let w = &self.ws[c];
                cell.count[side] += 1;
                axpy(1.0, &s.features, &mut cell.sum[side]);
                add_outer_product(&mut cell.product[side], w, &s.features, &mut self.scratch[..w.cols()]);
            }
        }
    }

    fn merge(&mut self, other: &Self) {
        for (c, o) in self.cells.iter_mut().zip(&other.cells) {
            for side in [IN, OUT] {
                c.count[side] += o.count[side];
                axpy(1.0, &o.sum[side], &mut c.sum[side]);
                axpy(1.0, o.product[side].as_slice(), c.product[side].as_mut_slice());
            }
        }
    }

    fn reset(&mut self) {
        for c in &mut self.cells {
            c.count = [0; 2];
            for side in [IN, OUT] {
                c.sum[side].iter_mut().for_each(|v| *v = 0.0);
                c.product[side].fill_zero();
            }
        }
    }
}

/// Running state of one cell.
struct Cell {
    attribute: usize,
    group: usize,
    w: OrthonormalBasis,
    count: [u64; 2],
    mean: [Vec<f64>; 2],
    degenerate: usize,
    scale: f64,
}

/// One-vs-rest unfair subspace over every attribute of the stream's schema.
///
/// `mean_gap` of the result is the gap of cell (attribute 0, group 1),
/// which for a single binary attribute is the usual `m̄¹ − m̄⁰`;
/// `cell_mean_gaps` lists every cell's gap, attribute-major.
pub fn estimate_unfair_subspace_multi<S: SampleStream + ?Sized>(
    stream: &mut S,
    cfg: &FnpmConfig,
) -> Result<UnfairSubspace> {
    cfg.validate()?;
    let schema: AttributeSchema = stream.schema().clone();
    let d = stream.dim();
    let ranks = cfg.m.per_attribute(schema.attribute_count())?;
    let width = multi_width(&ranks, &schema);
    if d <= width {
        return Err(Error::DimensionBudget(format!(
            "d = {d} must exceed sum_r g_r (m_r + 1) = {width}"
        )));
    }
    let needed = (cfg.iters_t as u64) * (cfg.block_b as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let mut cells = Vec::new();
    let mut first_cell = vec![0];
    for (r, (&g, &m)) in schema.group_counts().iter().zip(&ranks).enumerate() {
        for a in 0..g {
            let w = if m > 0 {
                orthonormalize_with_restarts(gaussian_matrix(&mut rng, d, m), None, &mut rng, 0)?
            } else {
                OrthonormalBasis::empty(d)
            };
            cells.push(Cell {
                attribute: r,
                group: a,
                w,
                count: [0; 2],
                mean: [vec![0.0; d], vec![0.0; d]],
                degenerate: 0,
                scale: 0.0,
            });
        }
        first_cell.push(cells.len());
    }
    let first_cell = Arc::new(first_cell);

    let mut consumed = 0u64;
    for t in 1..=cfg.iters_t {
        let ws = Arc::new(cells.iter().map(|c| c.w.columns().clone()).collect::<Vec<_>>());
        let mut sums = ChunkedSum::new(MultiBlockSums::new(ws, first_cell.clone()), cfg.execution);
        ingest_block(stream, cfg.block_b, &mut sums, cfg.execution, &mut consumed, needed)?;
        let sums = sums.finish();
        for (cell, block) in cells.iter_mut().zip(sums.cells) {
            let CellSums { count, sum, product } = block;
            let mut c_side = Vec::with_capacity(2);
            for (side, (s, mut p)) in sum.into_iter().zip(product).enumerate() {
                let b = count[side];
                if b > 0 {
                    let inv = 1.0 / b as f64;
                    let block_mean: Vec<f64> = s.iter().map(|v| v * inv).collect();
                    fold_running_mean(&mut cell.mean[side], &mut cell.count[side], &block_mean, b);
                    p.scale(inv);
                } else {
                    p.fill_zero();
                }
                c_side.push(p);
            }
            if cell.w.rank() == 0 {
                continue;
            }
            let gap = c_side[IN].sub(&c_side[OUT])?;
            cell.scale = cell
                .scale
                .max(c_side[IN].frobenius_norm())
                .max(c_side[OUT].frobenius_norm());
            if gap.frobenius_norm() <= cfg.degenerate_threshold * cell.scale {
                cell.degenerate += 1;
            }
            cell.w = orthonormalize_with_restarts(gap, None, &mut rng, t)?;
        }
    }

    for cell in &cells {
        if cell.count[IN] == 0 || cell.count[OUT] == 0 {
            let side = if cell.count[IN] == 0 { "in" } else { "out" };
            return Err(Error::GroupStarvation(format!(
                "attribute {} group {}: no samples on the {side} side after {consumed} draws",
                cell.attribute + 1,
                cell.group
            )));
        }
    }

    let mut w_cols: Vec<&DenseMatrix> = Vec::new();
    for cell in &cells {
        if cell.w.rank() == 0 {
            continue;
        }
        if 2 * cell.degenerate >= cfg.iters_t {
            warn!(
                "attribute {} group {}: second-moment gap degenerate in {} of {} iterations; its directions are left out",
                cell.attribute + 1,
                cell.group,
                cell.degenerate,
                cfg.iters_t
            );
            continue;
        }
        w_cols.push(cell.w.columns());
    }
    let gaps: Vec<Vec<f64>> = cells
        .iter()
        .map(|c| c.mean[IN].iter().zip(&c.mean[OUT]).map(|(a, b)| a - b).collect())
        .collect();
    let gap_cols = gaps
        .iter()
        .map(|f| DenseMatrix::column_vector(f))
        .collect::<Result<Vec<_>>>()?;

    let w_all = if w_cols.is_empty() {
        DenseMatrix::zeros(d, 0)
    } else {
        DenseMatrix::hstack(&w_cols)?
    };
    let mut blocks = w_cols.clone();
    blocks.extend(gap_cols.iter());
    let all = DenseMatrix::hstack(&blocks)?;
    let threshold = cfg.g_threshold * all.max_column_norm().max(1.0);
    let report = qr_rank_revealing_abs(&all, threshold)?;
    let w_report = qr_rank_revealing_abs(&w_all, cfg.g_threshold * w_all.max_column_norm().max(1.0))?;
    let second_moment_basis = w_report.basis;

    let mut residual_gap_norm: f64 = 0.0;
    for f in &gaps {
        let g = project_out_vec(&second_moment_basis, &project_out_vec(&second_moment_basis, f)?)?;
        residual_gap_norm = residual_gap_norm.max(norm2(&g));
    }
    let mean_direction_included = report.kept.iter().any(|&j| j >= w_all.cols());
    info!(
        "one-vs-rest unfair subspace: {} cells, {} of {} columns kept",
        cells.len(),
        report.kept.len(),
        all.cols()
    );
    Ok(UnfairSubspace {
        basis: report.basis,
        second_moment_basis,
        mean_gap: gaps[first_cell[0] + 1].clone(),
        residual_gap_norm,
        mean_direction_included,
        cell_mean_gaps: gaps,
        samples_consumed: consumed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairpca::unfair::estimate_unfair_subspace;
    use crate::linalg::sin_distance;
    use crate::stream::CyclingStream;

    fn binary_points() -> Vec<LabeledSample> {
        // Group 1 carries ±√8 e3 and ±√2 e2, group 0 carries ±√2 e1 and a
        // mean shift along e4.
        let s2 = 2f64.sqrt();
        let s8 = 8f64.sqrt();
        let e = |i: usize, v: f64| {
            let mut x = vec![0.0; 6];
            x[i] = v;
            x
        };
        let mut shifted = e(0, s2);
        shifted[3] = 1.0;
        vec![
            LabeledSample::binary(1, e(1, s2)),
            LabeledSample::binary(0, shifted),
            LabeledSample::binary(1, e(2, s8)),
            LabeledSample::binary(0, e(0, -s2)),
            LabeledSample::binary(1, e(1, -s2)),
            LabeledSample::binary(1, e(2, -s8)),
        ]
    }

    #[test]
    fn binary_schema_matches_single_attribute_estimator() {
        let cfg = FnpmConfig::new(1, 1, 6, 6, 60, 1).with_seed(4);
        let stream = CyclingStream::new(AttributeSchema::binary(), binary_points()).unwrap();
        let single = estimate_unfair_subspace(&mut stream.clone(), &cfg).unwrap();
        let multi = estimate_unfair_subspace_multi(&mut stream.clone(), &cfg).unwrap();
        assert_eq!(single.rank(), multi.rank());
        assert!(sin_distance(&single.basis, &multi.basis).unwrap() <= 1e-6);
        assert_eq!(single.mean_gap, multi.mean_gap);
        let neg: Vec<f64> = multi.mean_gap.iter().map(|v| -v).collect();
        assert_eq!(multi.cell_mean_gaps[0], neg);
    }

    #[test]
    fn starved_cell() {
        let schema = AttributeSchema::new(vec![2, 3]).unwrap();
        let pts = vec![
            LabeledSample::new(vec![0, 0], vec![1.0; 7]),
            LabeledSample::new(vec![1, 1], vec![0.5; 7]),
        ];
        let mut s = CyclingStream::new(schema, pts).unwrap();
        let cfg = FnpmConfig::new(1, 0, 2, 2, 2, 1);
        match estimate_unfair_subspace_multi(&mut s, &cfg) {
            Err(Error::GroupStarvation(msg)) => assert!(msg.contains("attribute 2 group 2"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn budget_is_checked() {
        let schema = AttributeSchema::new(vec![3]).unwrap();
        let mut s = CyclingStream::new(schema, vec![LabeledSample::binary(0, vec![1.0; 6])]).unwrap();
        // 3 · (1 + 1) = 6 is not below d = 6.
        assert!(matches!(
            estimate_unfair_subspace_multi(&mut s, &FnpmConfig::new(1, 1, 1, 1, 1, 1)),
            Err(Error::DimensionBudget(_))
        ));
    }
}
