use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::stream::AttributeSchema;

pub const DEFAULT_G_THRESHOLD: f64 = 1e-8;
pub const DEFAULT_DEGENERATE_THRESHOLD: f64 = 1e-12;

/// Rank of the second-moment part of the unfair subspace: one value, or one
/// per sensitive attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UnfairRank {
    Single(usize),
    PerAttribute(Vec<usize>),
}

impl Default for UnfairRank {
    fn default() -> Self {
        UnfairRank::Single(0)
    }
}

impl UnfairRank {
    /// Rank for each of `attributes` attributes. A single value applies to
    /// every attribute.
    pub fn per_attribute(&self, attributes: usize) -> Result<Vec<usize>> {
        match self {
            UnfairRank::Single(m) => Ok(vec![*m; attributes]),
            UnfairRank::PerAttribute(ms) if ms.len() == attributes => Ok(ms.clone()),
            UnfairRank::PerAttribute(ms) => Err(Error::InvalidConfig(format!(
                "m lists {} ranks for {attributes} attribute(s)",
                ms.len()
            ))),
        }
    }

    /// The rank for a single-attribute fit.
    pub fn single(&self) -> Result<usize> {
        Ok(self.per_attribute(1)?[0])
    }
}

/// Parameters of a two-phase streaming fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnpmConfig {
    /// Target dimension.
    pub k: usize,
    /// Rank of the second-moment gap to remove.
    #[serde(default)]
    pub m: UnfairRank,
    /// Phase-1 block size.
    #[serde(rename = "b")]
    pub block_b: usize,
    /// Phase-2 block size.
    #[serde(rename = "B")]
    pub block_big_b: usize,
    /// Phase-1 iterations.
    #[serde(rename = "T")]
    pub iters_t: usize,
    /// Phase-2 iterations.
    #[serde(rename = "Tau")]
    pub iters_tau: usize,
    /// The residual mean gap `ĝ` is appended to the basis iff
    /// `‖ĝ‖ > g_threshold · max(‖f̂‖, 1)`.
    #[serde(default = "default_g_threshold")]
    pub g_threshold: f64,
    /// An iteration is degenerate when `‖C¹ − C⁰‖_F` falls below this
    /// fraction of the largest `‖C^(a)‖_F` seen so far.
    #[serde(default = "default_degenerate_threshold")]
    pub degenerate_threshold: f64,
    #[serde(default)]
    pub rng_seed: u64,
    /// Does not affect results, so it is not echoed into model files.
    #[serde(default, skip_serializing)]
    pub execution: Execution,
}

fn default_g_threshold() -> f64 {
    DEFAULT_G_THRESHOLD
}

fn default_degenerate_threshold() -> f64 {
    DEFAULT_DEGENERATE_THRESHOLD
}

impl FnpmConfig {
    /// Single-attribute configuration with default thresholds and seed 0.
    pub fn new(k: usize, m: usize, block_b: usize, block_big_b: usize, iters_t: usize, iters_tau: usize) -> Self {
        FnpmConfig {
            k,
            m: UnfairRank::Single(m),
            block_b,
            block_big_b,
            iters_t,
            iters_tau,
            g_threshold: DEFAULT_G_THRESHOLD,
            degenerate_threshold: DEFAULT_DEGENERATE_THRESHOLD,
            rng_seed: 0,
            execution: Execution::Sequential,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    /// Data-independent checks.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.block_b == 0 || self.block_big_b == 0 {
            return bad("block sizes b and B must be at least 1");
        }
        if self.iters_t == 0 || self.iters_tau == 0 {
            return bad("iteration counts T and Tau must be at least 1");
        }
        if let UnfairRank::PerAttribute(ms) = &self.m {
            if ms.is_empty() {
                return bad("m must list at least one rank");
            }
        }
        for (name, v) in [
            ("g_threshold", self.g_threshold),
            ("degenerate_threshold", self.degenerate_threshold),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Checks the dimension budget of a single-attribute fit in dimension
    /// `dim`: the unfair basis has at most `m + 1` columns, and `k` further
    /// directions must fit in its complement.
    pub fn check_binary_dim(&self, dim: usize) -> Result<()> {
        let m = self.m.single()?;
        if m >= dim {
            return Err(Error::DimensionBudget(format!("m = {m} must be below d = {dim}")));
        }
        if self.k + m + 1 > dim {
            return Err(Error::DimensionBudget(format!(
                "k + m + 1 = {} exceeds d = {dim}",
                self.k + m + 1
            )));
        }
        Ok(())
    }

    /// Checks `d > k + Σ_r g_r (m_r + 1)` for a multi-attribute fit.
    pub fn check_multi_dim(&self, dim: usize, schema: &AttributeSchema) -> Result<()> {
        let width = multi_width(&self.m.per_attribute(schema.attribute_count())?, schema);
        if dim <= self.k + width {
            return Err(Error::DimensionBudget(format!(
                "d = {dim} must exceed k + sum_r g_r (m_r + 1) = {}",
                self.k + width
            )));
        }
        Ok(())
    }
}

/// Width `Σ_r g_r (m_r + 1)` of the multi-attribute concatenation.
pub fn multi_width(ranks: &[usize], schema: &AttributeSchema) -> usize {
    ranks
        .iter()
        .zip(schema.group_counts())
        .map(|(m, g)| g * (m + 1))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_names_and_defaults() {
        let cfg: FnpmConfig =
            serde_json::from_str(r#"{"k":3,"m":2,"b":100,"B":200,"T":5,"Tau":6}"#).unwrap();
        assert_eq!(cfg, FnpmConfig::new(3, 2, 100, 200, 5, 6));
        let multi: FnpmConfig =
            serde_json::from_str(r#"{"k":1,"m":[1,0],"b":1,"B":1,"T":1,"Tau":1,"rng_seed":9}"#).unwrap();
        assert_eq!(multi.m, UnfairRank::PerAttribute(vec![1, 0]));
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains(r#""Tau":6"#) && !text.contains("execution"));
    }

    #[test]
    fn validation() {
        assert!(FnpmConfig::new(1, 0, 1, 1, 1, 1).validate().is_ok());
        assert!(FnpmConfig::new(0, 0, 1, 1, 1, 1).validate().is_err());
        assert!(FnpmConfig::new(1, 0, 0, 1, 1, 1).validate().is_err());
        assert!(FnpmConfig::new(1, 0, 1, 1, 1, 0).validate().is_err());
        let mut cfg = FnpmConfig::new(1, 0, 1, 1, 1, 1);
        cfg.g_threshold = f64::NAN;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn budgets() {
        let cfg = FnpmConfig::new(2, 1, 1, 1, 1, 1);
        assert!(cfg.check_binary_dim(4).is_ok());
        assert!(matches!(cfg.check_binary_dim(3), Err(Error::DimensionBudget(_))));
        let schema = AttributeSchema::new(vec![2, 3]).unwrap();
        // width = 2·2 + 3·2 = 10
        assert!(cfg.check_multi_dim(13, &schema).is_ok());
        assert!(cfg.check_multi_dim(12, &schema).is_err());
        let cfg = FnpmConfig {
            m: UnfairRank::PerAttribute(vec![1]),
            ..cfg
        };
        assert!(matches!(cfg.check_multi_dim(20, &schema), Err(Error::InvalidConfig(_))));
    }
}
