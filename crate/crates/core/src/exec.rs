//! Execution policy and the chunked reduction behind every per-block sum.
//!
//! Block sums are always formed the same way: samples are grouped into
//! fixed chunks of [`CHUNK_LEN`] consecutive samples, each chunk is summed
//! into a fresh partial in sample order, and partials are folded into the
//! running total in chunk order. The sequential path walks the chunks one by
//! one; the parallel path (feature `parallel`) computes whole chunks on the
//! rayon pool. Both perform the same floating-point operations in the same
//! order, so the results are bit-identical for any thread count.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Samples per reduction chunk. Changing it changes result bits.
pub const CHUNK_LEN: usize = 64;

/// Heap budget for samples buffered by the parallel ingestion path.
const PARALLEL_BUFFER_BYTES: usize = 32 << 20;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    /// Single-threaded; holds one sample at a time.
    #[default]
    Sequential,
    /// Chunks of a block are reduced on the rayon pool. Falls back to the
    /// sequential path when the crate is built without `parallel`.
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// How many samples of dimension `dim` a streaming fit buffers before
    /// handing them to [`ChunkedSum::extend`]. Always a multiple of
    /// [`CHUNK_LEN`]; 1 for the sequential path.
    pub fn ingest_batch(self, dim: usize) -> usize {
        if !self.is_parallel() {
            return 1;
        }
        let fit = PARALLEL_BUFFER_BYTES / (8 * dim.max(1));
        let chunks = (fit / CHUNK_LEN).clamp(1, 16);
        chunks * CHUNK_LEN
    }

    /// Evaluates `f(0..n)` and returns the results in index order.
    pub fn map_indexed<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }
}

/// A mergeable partial sum over items.
pub trait Accumulator: Clone + Send + Sync {
    type Item: Sync;

    fn add(&mut self, item: &Self::Item);
    fn merge(&mut self, other: &Self);
    fn reset(&mut self);
}

/// Chunked, order-stable reduction of a sequence of items.
pub struct ChunkedSum<A: Accumulator> {
    #[cfg_attr(not(feature = "parallel"), allow(dead_code))]
    zero: A,
    total: A,
    partial: A,
    filled: usize,
    exec: Execution,
}

impl<A: Accumulator> ChunkedSum<A> {
    /// `zero` must be the additive identity of the accumulator.
    pub fn new(zero: A, exec: Execution) -> Self {
        ChunkedSum {
            total: zero.clone(),
            partial: zero.clone(),
            zero,
            filled: 0,
            exec,
        }
    }

    pub fn push(&mut self, item: &A::Item) {
        self.partial.add(item);
        self.filled += 1;
        if self.filled == CHUNK_LEN {
            self.flush();
        }
    }

    pub fn extend(&mut self, items: &[A::Item]) {
        let mut rest = items;
        while self.filled != 0 && !rest.is_empty() {
            self.push(&rest[0]);
            rest = &rest[1..];
        }
        if self.exec.is_parallel() {
            let whole = rest.len() / CHUNK_LEN * CHUNK_LEN;
            self.extend_whole_chunks(&rest[..whole]);
            rest = &rest[whole..];
        }
        for item in rest {
            self.push(item);
        }
    }

    #[cfg(feature = "parallel")]
    fn extend_whole_chunks(&mut self, items: &[A::Item]) {
        let zero = &self.zero;
        let parts: Vec<A> = items
            .par_chunks(CHUNK_LEN)
            .map(|chunk| {
                let mut p = zero.clone();
                for item in chunk {
                    p.add(item);
                }
                p
            })
            .collect();
        for p in &parts {
            self.total.merge(p);
        }
    }

    #[cfg(not(feature = "parallel"))]
    fn extend_whole_chunks(&mut self, items: &[A::Item]) {
        for item in items {
            self.push(item);
        }
    }

    fn flush(&mut self) {
        self.total.merge(&self.partial);
        self.partial.reset();
        self.filled = 0;
    }

    /// Folds the trailing partial chunk and returns the total.
    pub fn finish(mut self) -> A {
        if self.filled > 0 {
            self.flush();
        }
        self.total
    }
}
