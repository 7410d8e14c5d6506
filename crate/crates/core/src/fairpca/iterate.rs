//! Pieces shared by the power iterations of both phases: block ingestion,
//! seeded Gaussian starts, and QR with re-randomization of deficient columns.

use log::warn;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::exec::{Accumulator, ChunkedSum, Execution};
use crate::linalg::{project_out_vec, qr_rank_revealing, DenseMatrix, OrthonormalBasis, DEFAULT_RANK_TOL};
use crate::stream::{LabeledSample, SampleStream};

/// Re-randomization attempts before a rank-deficient iterate is fatal.
pub const MAX_RESTARTS: usize = 3;

pub(crate) fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = StandardNormal.sample(rng);
    }
    m
}

/// Orthonormalizes `m`. Columns the QR reports as deficient are replaced by
/// Gaussian columns (scaled to the largest column norm and, if `avoid` is
/// given, projected off it) and the QR is repeated, at most
/// [`MAX_RESTARTS`] times.
pub(crate) fn orthonormalize_with_restarts(
    m: DenseMatrix,
    avoid: Option<&OrthonormalBasis>,
    rng: &mut ChaCha8Rng,
    iteration: usize,
) -> Result<OrthonormalBasis> {
    let mut cur = m;
    for attempt in 0..=MAX_RESTARTS {
        let report = qr_rank_revealing(&cur, DEFAULT_RANK_TOL)?;
        if report.deficient.is_empty() {
            return Ok(report.basis);
        }
        if attempt == MAX_RESTARTS {
            break;
        }
        warn!(
            "iteration {iteration}: {} rank-deficient column(s), re-randomizing (attempt {})",
            report.deficient.len(),
            attempt + 1
        );
        let scale = match cur.max_column_norm() {
            s if s > 0.0 => s,
            _ => 1.0,
        };
        let d = cur.rows();
        for &j in &report.deficient {
            let mut col: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            if let Some(u) = avoid {
                col = project_out_vec(u, &project_out_vec(u, &col)?)?;
            }
            let n = crate::linalg::norm2(&col);
            if n > 0.0 {
                col.iter_mut().for_each(|v| *v *= scale / n);
            }
            cur.set_column(j, &col);
        }
    }
    Err(Error::RankCollapse {
        iteration,
        retries: MAX_RESTARTS,
    })
}

/// Pulls exactly `n` samples into `sums`. Sequential execution holds one
/// sample at a time; parallel execution buffers chunk-aligned batches.
/// `consumed` counts every sample taken from the stream.
pub(crate) fn ingest_block<S, A>(
    stream: &mut S,
    n: usize,
    sums: &mut ChunkedSum<A>,
    exec: Execution,
    consumed: &mut u64,
    needed: u64,
) -> Result<()>
where
    S: SampleStream + ?Sized,
    A: Accumulator<Item = LabeledSample>,
{
    let dim = stream.dim();
    let batch = exec.ingest_batch(dim).min(n);
    let mut buf: Vec<LabeledSample> = Vec::with_capacity(if batch > 1 { batch } else { 0 });
    let mut taken = 0;
    while taken < n {
        let Some(sample) = stream.next_sample()? else {
            log::info!("stream ended {taken} samples into a block of {n}; partial block dropped");
            return Err(Error::InsufficientData {
                needed,
                available: *consumed,
            });
        };
        *consumed += 1;
        taken += 1;
        if sample.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "sample of dimension {} in a stream of dimension {dim}",
                sample.dim()
            )));
        }
        if batch <= 1 {
            sums.push(&sample);
        } else {
            buf.push(sample);
            if buf.len() == batch {
                sums.extend(&buf);
                buf.clear();
            }
        }
    }
    if !buf.is_empty() {
        sums.extend(&buf);
    }
    Ok(())
}

/// `acc += x (xᵀ w)` for a row-major `d × r` matrix `w`; `y` is scratch of
/// length `r`.
#[inline]
pub(crate) fn add_outer_product(acc: &mut DenseMatrix, w: &DenseMatrix, x: &[f64], y: &mut [f64]) {
    let r = w.cols();
    y.iter_mut().for_each(|v| *v = 0.0);
    if r == 0 {
        return;
    }
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            for (yj, wij) in y.iter_mut().zip(w.row(i)) {
                *yj += xi * wij;
            }
        }
    }
    let data = acc.as_mut_slice();
    for (i, &xi) in x.iter().enumerate() {
        let row = &mut data[i * r..(i + 1) * r];
        for (a, yj) in row.iter_mut().zip(y.iter()) {
            *a += xi * yj;
        }
    }
}
