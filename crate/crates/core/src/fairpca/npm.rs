use std::sync::Arc;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{Accumulator, ChunkedSum};
use crate::fairpca::config::FnpmConfig;
use crate::fairpca::iterate::{add_outer_product, gaussian_matrix, ingest_block, orthonormalize_with_restarts};
use crate::fairpca::model::{FairPcaModel, FitMethod, ModelConfig};
use crate::fairpca::unfair::UnfairSubspace;
use crate::linalg::{axpy, project_out, DenseMatrix, OrthonormalBasis};
use crate::stream::{LabeledSample, SampleStream};

/// RNG stream used by the second phase; the first phase uses stream 0 of
/// the same seed.
const PHASE2_STREAM: u64 = 1;

/// Block sum `Σ x (xᵀ V)`; group labels are ignored.
#[derive(Debug, Clone)]
pub struct CovarianceProduct {
    v: Arc<DenseMatrix>,
    count: u64,
    product: DenseMatrix,
    scratch: Vec<f64>,
}

impl CovarianceProduct {
    pub fn new(v: Arc<DenseMatrix>) -> Self {
        let (d, k) = v.shape();
        CovarianceProduct {
            count: 0,
            product: DenseMatrix::zeros(d, k),
            scratch: vec![0.0; k],
            v,
        }
    }

    /// `(1/n) Σ x (xᵀ V)` over the samples added so far.
    pub fn mean(mut self) -> DenseMatrix {
        if self.count > 0 {
            self.product.scale(1.0 / self.count as f64);
        }
        self.product
    }
}

impl Accumulator for CovarianceProduct {
    type Item = LabeledSample;

    fn add(&mut self, s: &LabeledSample) {
        self.count += 1;
        add_outer_product(&mut self.product, &self.v, &s.features, &mut self.scratch);
    }

    fn merge(&mut self, other: &Self) {
        self.count += other.count;
        axpy(1.0, other.product.as_slice(), self.product.as_mut_slice());
    }

    fn reset(&mut self) {
        self.count = 0;
        self.product.fill_zero();
    }
}

/// Second phase: a noisy power method on the covariance deflated by
/// `unfair.basis`.
pub fn fit_fair_npm<S: SampleStream + ?Sized>(
    stream: &mut S,
    cfg: &FnpmConfig,
    unfair: UnfairSubspace,
) -> Result<FairPcaModel> {
    fit_fair_npm_observed(stream, cfg, unfair, |_, _| {})
}

/// As [`fit_fair_npm`], calling `observer(τ, V_τ)` after every iteration.
pub fn fit_fair_npm_observed<S, F>(
    stream: &mut S,
    cfg: &FnpmConfig,
    unfair: UnfairSubspace,
    mut observer: F,
) -> Result<FairPcaModel>
where
    S: SampleStream + ?Sized,
    F: FnMut(usize, &OrthonormalBasis),
{
    cfg.validate()?;
    let d = stream.dim();
    if unfair.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "unfair subspace lives in dimension {}, stream has {d}",
            unfair.dim()
        )));
    }
    if cfg.k + unfair.rank() > d {
        return Err(Error::DimensionBudget(format!(
            "k + m' = {} + {} exceeds d = {d}",
            cfg.k,
            unfair.rank()
        )));
    }
    let u = &unfair.basis;
    let needed = (cfg.iters_tau as u64) * (cfg.block_big_b as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(PHASE2_STREAM);
    let mut v = orthonormalize_with_restarts(gaussian_matrix(&mut rng, d, cfg.k), None, &mut rng, 0)?;

    let mut consumed = 0u64;
    for tau in 1..=cfg.iters_tau {
        let deflated = project_out(u, v.columns())?;
        let mut sums = ChunkedSum::new(CovarianceProduct::new(Arc::new(deflated)), cfg.execution);
        ingest_block(stream, cfg.block_big_b, &mut sums, cfg.execution, &mut consumed, needed)?;
        let c = sums.finish().mean();
        let c = project_out(u, &project_out(u, &c)?)?;
        v = orthonormalize_with_restarts(c, Some(u), &mut rng, tau)?;
        debug!("phase 2 iteration {tau}");
        observer(tau, &v);
    }
    info!("fair NPM finished after {consumed} phase-2 samples");
    let samples_consumed = unfair.samples_consumed + consumed;
    Ok(FairPcaModel {
        loading: v,
        unfair,
        config: ModelConfig::Streaming(cfg.clone()),
        samples_consumed,
        method: FitMethod::Fnpm,
    })
}

/// Both phases on one stream: phase 1 takes the first `T·b` samples, phase 2
/// the next `𝒯·𝓑`. `multi_attribute` selects the one-vs-rest estimator.
pub fn fit<S: SampleStream + ?Sized>(stream: &mut S, cfg: &FnpmConfig, multi_attribute: bool) -> Result<FairPcaModel> {
    cfg.validate()?;
    let d = stream.dim();
    let unfair = if multi_attribute {
        cfg.check_multi_dim(d, stream.schema())?;
        crate::fairpca::multi::estimate_unfair_subspace_multi(stream, cfg)?
    } else {
        cfg.check_binary_dim(d)?;
        crate::fairpca::unfair::estimate_unfair_subspace(stream, cfg)?
    };
    fit_fair_npm(stream, cfg, unfair)
}
