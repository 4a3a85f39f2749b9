use thiserror::Error;

/// Failures raised by the linear algebra, problem evaluation and subproblem layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("negative radicand {value:e} in norm evaluation")]
    NegativeRadicand { value: f64 },

    #[error("non-finite value while evaluating element {element}")]
    NonFinite { element: usize },

    #[error("non-finite value at node {node}")]
    NonFiniteNode { node: usize },

    #[error("nonconvex curvature encountered in the subproblem (value {curvature:e})")]
    NonconvexCurvature { curvature: f64 },

    #[error("relative error undefined: exact step has zero norm")]
    UndefinedRatio,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
