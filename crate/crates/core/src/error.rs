use thiserror::Error;

use crate::conic::SolveStatus;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("operator is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("trace is {0} instead of 1")]
    Trace(f64),
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("degenerate polytope: {0}")]
    Degenerate(String),
    #[error("origin is not interior to the polytope (closest facet offset {0:.3e})")]
    OriginNotInterior(f64),
    #[error("facet enumeration intractable: parameter dimension {dim} exceeds cap {cap}")]
    FacetCap { dim: usize, cap: usize },
    #[error("strategy count {count} exceeds cap {cap}; use a pruned strategy set")]
    StrategyCap { count: f64, cap: usize },
    #[error("conic solver returned {0:?}")]
    Solver(SolveStatus),
    #[error("problem infeasible: {0}")]
    Infeasible(String),
    #[error("malformed certificate: {0}")]
    Certificate(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
