//! Two-group Gaussian mixture with power-law spectra.
//!
//! A sample draws `a ~ Bernoulli(p)` and then `x = μ_a + R_a Λ_a^{1/2} z`
//! with `z ~ N(0, I)`, `Λ_a = diag(scale_a · j^{-α_a})`. The caller fixes
//! `μ_1`; `μ_0 = −p μ_1 / (1 − p)` so the mixture mean is zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, qr_orthonormalize, DenseMatrix};
use crate::stream::sample::{AttributeSchema, LabeledSample};
use crate::stream::source::SampleStream;

/// Largest dimension for which a dense `d × d` rotation is materialized.
pub const MAX_DENSE_ROTATION_DIM: usize = 8192;

/// A scalar shared by both groups, or one value per group `[group 0, group 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerGroup {
    Shared(f64),
    Split([f64; 2]),
}

impl PerGroup {
    pub fn get(&self, group: usize) -> f64 {
        match self {
            PerGroup::Shared(v) => *v,
            PerGroup::Split(v) => v[group],
        }
    }

    fn values(&self) -> [f64; 2] {
        [self.get(0), self.get(1)]
    }
}

/// How the group rotations `R_a` are built.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rotation {
    /// QR of a seeded standard-normal `d × d` draw.
    #[default]
    Dense,
    /// Product of `reflections` seeded Householder reflections; `O(d)`
    /// memory per reflection, for very high dimensions.
    Householder { reflections: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub p: f64,
    pub mu1: Vec<f64>,
    pub alpha: PerGroup,
    pub scale: PerGroup,
    pub rotation_seed: u64,
    pub sample_seed: u64,
    #[serde(default, skip_serializing_if = "is_dense")]
    pub rotation: Rotation,
}

fn is_dense(r: &Rotation) -> bool {
    *r == Rotation::Dense
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.dim == 0 {
            return bad("dim must be at least 1".into());
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad(format!("p = {} must lie in (0, 1]", self.p));
        }
        if self.mu1.len() != self.dim {
            return bad(format!("mu1 has {} entries, dim is {}", self.mu1.len(), self.dim));
        }
        if self.mu1.iter().any(|v| !v.is_finite()) {
            return bad("mu1 has non-finite entries".into());
        }
        if self.p == 1.0 && self.mu1.iter().any(|&v| v != 0.0) {
            return bad("with p = 1 the mixture mean is mu1, which must then be zero".into());
        }
        for a in self.alpha.values() {
            if !(a >= 1.0 && a.is_finite()) {
                return bad(format!("decay exponent {a} must be >= 1"));
            }
        }
        for s in self.scale.values() {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("spectrum scale {s} must be positive"));
            }
        }
        match self.rotation {
            Rotation::Dense if self.dim > MAX_DENSE_ROTATION_DIM => bad(format!(
                "dense rotations are limited to dim <= {MAX_DENSE_ROTATION_DIM}; use householder"
            )),
            Rotation::Householder { reflections: 0 } => {
                bad("householder rotation needs at least one reflection".into())
            }
            _ => Ok(()),
        }
    }

    /// Group means `[μ_0, μ_1]`.
    pub fn means(&self) -> [Vec<f64>; 2] {
        let mu0 = if self.p < 1.0 {
            let c = -self.p / (1.0 - self.p);
            self.mu1.iter().map(|v| c * v).collect()
        } else {
            vec![0.0; self.dim]
        };
        [mu0, self.mu1.clone()]
    }

    /// Eigenvalues `scale_a · j^{-α_a}`, `j = 1..d`, of group `a`'s covariance.
    pub fn spectrum(&self, group: usize) -> Vec<f64> {
        let (s, a) = (self.scale.get(group), self.alpha.get(group));
        (1..=self.dim).map(|j| s * (j as f64).powf(-a)).collect()
    }

    /// Same spec with a different sample seed; the population is unchanged.
    pub fn with_sample_seed(&self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            sample_seed: seed,
            ..self.clone()
        }
    }

    pub fn stream(&self) -> Result<SyntheticStream> {
        SyntheticStream::new(self.clone())
    }

    fn rotations(&self) -> Result<[RotationFactor; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rotation_seed);
        let d = self.dim;
        let make = |rng: &mut ChaCha8Rng| -> Result<RotationFactor> {
            match self.rotation {
                Rotation::Dense => {
                    let g: Vec<f64> = (0..d * d).map(|_| StandardNormal.sample(rng)).collect();
                    let q = qr_orthonormalize(&DenseMatrix::from_row_major(d, d, g)?)?;
                    Ok(RotationFactor::Dense(q.into_columns()))
                }
                Rotation::Householder { reflections } => {
                    let mut vs = Vec::with_capacity(reflections);
                    for _ in 0..reflections {
                        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
                        let n = dot(&v, &v).sqrt();
                        v.iter_mut().for_each(|x| *x /= n);
                        vs.push(v);
                    }
                    Ok(RotationFactor::Householder(vs))
                }
            }
        };
        let r0 = make(&mut rng)?;
        let r1 = make(&mut rng)?;
        Ok([r0, r1])
    }

    /// Exact group covariances `Σ_a = R_a Λ_a R_aᵀ` (`d × d`).
    pub fn covariances(&self) -> Result<[DenseMatrix; 2]> {
        self.validate()?;
        let rot = self.rotations()?;
        let d = self.dim;
        let cov = |a: usize| -> Result<DenseMatrix> {
            let r = rot[a].materialize(d);
            let lam = self.spectrum(a);
            let mut scaled = r.clone();
            for i in 0..d {
                for (j, l) in lam.iter().enumerate() {
                    scaled.set(i, j, scaled.get(i, j) * l);
                }
            }
            scaled.matmul(&r.transpose())
        };
        Ok([cov(0)?, cov(1)?])
    }
}

#[derive(Debug, Clone)]
enum RotationFactor {
    Dense(DenseMatrix),
    Householder(Vec<Vec<f64>>),
}

impl RotationFactor {
    /// `y ← R y`
    fn apply(&self, y: &mut [f64], scratch: &mut [f64]) {
        match self {
            RotationFactor::Dense(r) => {
                for (i, s) in scratch.iter_mut().enumerate() {
                    *s = dot(r.row(i), y);
                }
                y.copy_from_slice(scratch);
            }
            RotationFactor::Householder(vs) => {
                // R = H_1 ⋯ H_q, so H_q acts first.
                for v in vs.iter().rev() {
                    let c = 2.0 * dot(v, y);
                    for (yi, vi) in y.iter_mut().zip(v) {
                        *yi -= c * vi;
                    }
                }
            }
        }
    }

    fn materialize(&self, d: usize) -> DenseMatrix {
        match self {
            RotationFactor::Dense(r) => r.clone(),
            RotationFactor::Householder(_) => {
                let mut m = DenseMatrix::zeros(d, d);
                let mut e = vec![0.0; d];
                let mut scratch = vec![0.0; d];
                for j in 0..d {
                    e.iter_mut().for_each(|v| *v = 0.0);
                    e[j] = 1.0;
                    self.apply(&mut e, &mut scratch);
                    m.set_column(j, &e);
                }
                m
            }
        }
    }
}

/// Endless seeded stream drawn from a [`SyntheticSpec`].
pub struct SyntheticStream {
    spec: SyntheticSpec,
    schema: AttributeSchema,
    means: [Vec<f64>; 2],
    sqrt_spectrum: [Vec<f64>; 2],
    rotations: [RotationFactor; 2],
    rng: ChaCha8Rng,
    scratch: Vec<f64>,
}

impl SyntheticStream {
    pub fn new(spec: SyntheticSpec) -> Result<Self> {
        spec.validate()?;
        let rotations = spec.rotations()?;
        let sqrt_spectrum = [
            spec.spectrum(0).into_iter().map(f64::sqrt).collect(),
            spec.spectrum(1).into_iter().map(f64::sqrt).collect(),
        ];
        Ok(SyntheticStream {
            means: spec.means(),
            schema: AttributeSchema::binary(),
            rng: ChaCha8Rng::seed_from_u64(spec.sample_seed),
            scratch: vec![0.0; spec.dim],
            sqrt_spectrum,
            rotations,
            spec,
        })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    /// Draws the next sample; never fails.
    pub fn draw(&mut self) -> LabeledSample {
        let u: f64 = self.rng.random();
        let a = usize::from(u < self.spec.p);
        let mut x: Vec<f64> = self.sqrt_spectrum[a]
            .iter()
            .map(|s| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                s * z
            })
            .collect();
        self.rotations[a].apply(&mut x, &mut self.scratch);
        for (xi, m) in x.iter_mut().zip(&self.means[a]) {
            *xi += m;
        }
        LabeledSample::binary(a, x)
    }
}

impl SampleStream for SyntheticStream {
    fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn next_sample(&mut self) -> Result<Option<LabeledSample>> {
        Ok(Some(self.draw()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{symmetric_eig, EigenOrder};

    fn spec(dim: usize, p: f64) -> SyntheticSpec {
        let mu1 = (0..dim).map(|j| if j == 0 { 1.0 } else { 0.5 / j as f64 }).collect();
        SyntheticSpec {
            dim,
            p,
            mu1,
            alpha: PerGroup::Split([1.0, 2.0]),
            scale: PerGroup::Split([2.0, 1.0]),
            rotation_seed: 3,
            sample_seed: 4,
            rotation: Rotation::Dense,
        }
    }

    #[test]
    fn mixture_mean_is_zero() {
        let s = spec(6, 0.3);
        let [m0, m1] = s.means();
        for j in 0..6 {
            let mix = s.p * m1[j] + (1.0 - s.p) * m0[j];
            assert!(mix.abs() <= 1e-10);
        }
    }

    #[test]
    fn degenerate_bernoulli() {
        let mut s = spec(3, 1.0);
        s.mu1 = vec![0.0; 3];
        let mut st = s.stream().unwrap();
        assert!((0..200).all(|_| st.draw().group() == 1));
        // p = 1 with a nonzero mean cannot have a centered mixture.
        assert!(spec(3, 1.0).validate().is_err());
    }

    #[test]
    fn validation() {
        let mut s = spec(3, 0.5);
        s.p = 0.0;
        assert!(s.validate().is_err());
        let mut s = spec(3, 0.5);
        s.alpha = PerGroup::Shared(0.5);
        assert!(s.validate().is_err());
        let mut s = spec(3, 0.5);
        s.mu1.pop();
        assert!(s.validate().is_err());
        let mut s = spec(3, 0.5);
        s.rotation = Rotation::Householder { reflections: 0 };
        assert!(s.validate().is_err());
    }

    #[test]
    fn seeded_determinism() {
        let s = spec(5, 0.4);
        let mut a = s.stream().unwrap();
        let mut b = s.stream().unwrap();
        for _ in 0..100 {
            assert_eq!(a.draw(), b.draw());
        }
        let mut c = s.with_sample_seed(99).stream().unwrap();
        assert_ne!(a.draw(), c.draw());
    }

    #[test]
    fn empirical_group_means_within_three_sigma() {
        let s = spec(4, 0.3);
        let cov = s.covariances().unwrap();
        let means = s.means();
        let mut st = s.stream().unwrap();
        let n = 100_000;
        let mut sums = [vec![0.0; 4], vec![0.0; 4]];
        let mut counts = [0usize; 2];
        for _ in 0..n {
            let x = st.draw();
            let a = x.group();
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(&x.features) {
                *s += v;
            }
        }
        for a in 0..2 {
            for j in 0..4 {
                let emp = sums[a][j] / counts[a] as f64;
                let sigma = cov[a].get(j, j).sqrt();
                let bound = 3.0 * sigma / (counts[a] as f64).sqrt();
                assert!(
                    (emp - means[a][j]).abs() <= bound,
                    "group {a} coord {j}: {emp} vs {}",
                    means[a][j]
                );
            }
        }
        let frac = counts[1] as f64 / n as f64;
        assert!((frac - 0.3).abs() < 0.01);
    }

    #[test]
    fn empirical_top_eigenvalue_within_five_percent() {
        // Centered single-group check: with mu1 = 0 and p close to 1 all
        // samples share group 1's covariance.
        let mut s = spec(10, 1.0);
        s.mu1 = vec![0.0; 10];
        let mut st = s.stream().unwrap();
        let n = 200_000;
        let mut m = DenseMatrix::zeros(10, 10);
        for _ in 0..n {
            let x = st.draw().features;
            for i in 0..10 {
                for j in 0..10 {
                    m.set(i, j, m.get(i, j) + x[i] * x[j]);
                }
            }
        }
        m.scale(1.0 / n as f64);
        let top = symmetric_eig(&m, EigenOrder::ByValue).unwrap()[0].value;
        let lambda1 = s.spectrum(1)[0];
        assert!((top - lambda1).abs() <= 0.05 * lambda1, "{top} vs {lambda1}");
    }

    #[test]
    fn householder_rotation_is_orthogonal_and_matches_covariance() {
        let mut s = spec(6, 0.5);
        s.rotation = Rotation::Householder { reflections: 3 };
        let rot = s.rotations().unwrap();
        let r = rot[0].materialize(6);
        let rtr = r.t_matmul(&r).unwrap();
        assert!(rtr.sub(&DenseMatrix::identity(6)).unwrap().max_abs() < 1e-12);
        let cov = s.covariances().unwrap();
        let tr: f64 = s.spectrum(0).iter().sum();
        assert!((cov[0].trace() - tr).abs() < 1e-10);
    }

    #[test]
    fn spec_json_shape() {
        let text = r#"{"dim":2,"p":0.3,"mu1":[1.0,0.0],"alpha":1.5,"scale":[1.0,2.0],
                       "rotation_seed":1,"sample_seed":2}"#;
        let s: SyntheticSpec = serde_json::from_str(text).unwrap();
        assert_eq!(s.alpha, PerGroup::Shared(1.5));
        assert_eq!(s.scale.get(1), 2.0);
        assert_eq!(s.rotation, Rotation::Dense);
        s.validate().unwrap();
    }
}
