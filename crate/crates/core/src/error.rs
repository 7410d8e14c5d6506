use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to map failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The request itself is inconsistent (bad flags, bad shapes, bad spec).
    Config,
    /// The data could not be read or violates its contract.
    Data,
    /// The algorithm hit a degeneracy it cannot recover from.
    Algorithm,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rank deficient: column {column} has R-diagonal {diagonal:e} below threshold {threshold:e}")]
    RankDeficient {
        column: usize,
        diagonal: f64,
        threshold: f64,
    },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("non-finite value encountered: {0}")]
    NotFinite(String),

    #[error("no convergence after {iterations} iterations (last relative change {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("insufficient data: needed {needed} samples, stream ended after {available}")]
    InsufficientData { needed: u64, available: u64 },

    #[error("degenerate second-moment gap in {degenerate} of {iterations} iterations")]
    DegenerateGap { degenerate: usize, iterations: usize },

    #[error("group starvation: {0}")]
    GroupStarvation(String),

    #[error("rank collapse at iteration {iteration} after {retries} re-randomizations")]
    RankCollapse { iteration: usize, retries: usize },

    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("dimension budget exceeded: {0}")]
    DimensionBudget(String),

    #[error("empty group: {0}")]
    EmptyGroup(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier, suitable for machine-parseable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::NotSymmetric { .. } => "not_symmetric",
            Error::NotFinite(_) => "not_finite",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Io { .. } => "io",
            Error::MalformedRow { .. } => "malformed_row",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::DegenerateGap { .. } => "degenerate_gap",
            Error::GroupStarvation(_) => "group_starvation",
            Error::RankCollapse { .. } => "rank_collapse",
            Error::SchemaViolation(_) => "schema_violation",
            Error::DimensionBudget(_) => "dimension_budget",
            Error::EmptyGroup(_) => "empty_group",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::Json(_) => "json",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::DimensionMismatch(_)
            | Error::SchemaViolation(_)
            | Error::DimensionBudget(_)
            | Error::InvalidConfig(_)
            | Error::InvalidSpec(_) => ErrorClass::Config,
            Error::Io { .. }
            | Error::MalformedRow { .. }
            | Error::InsufficientData { .. }
            | Error::GroupStarvation(_)
            | Error::EmptyGroup(_)
            | Error::NotFinite(_)
            | Error::Json(_) => ErrorClass::Data,
            Error::RankDeficient { .. }
            | Error::NotSymmetric { .. }
            | Error::NoConvergence { .. }
            | Error::DegenerateGap { .. }
            | Error::RankCollapse { .. } => ErrorClass::Algorithm,
        }
    }
}
