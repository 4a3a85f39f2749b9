//! Inexact proximal Newton method for composite problems `F = f + g` on
//! finite-dimensional Hilbert spaces with a non-diagonal inner product.
//!
//! The space is `R^n` equipped with `(u, v)_X = uᵀRv` for a sparse SPD Gram
//! matrix `R`. Every routine is generic over the scalar type; the aliases at
//! the bottom of this file fix it to `f64` or `f32`.

// Negated comparisons are deliberate: they send NaN down the rejection path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod criteria;
pub mod diagnostics;
pub mod error;
pub mod hilbert;
pub mod outer;
pub mod problem;
pub mod scalar;
pub mod sparse;
pub mod subsolver;

pub use error::{Error, Result};
pub use hilbert::{BilinearForm, DualFunctional, GramOperator, PrimalVector};
pub use outer::{run, OuterConfig, RunError, RunReport, SolveMode, TerminationReason};
pub use problem::{CompositeProblem, ModelConfig, ModelProblem, NormChoice, QuadraticL1};
pub use scalar::Scalar;

pub type PrimalVectorF64 = PrimalVector<f64>;
pub type DualFunctionalF64 = DualFunctional<f64>;
pub type GramOperatorF64 = GramOperator<f64>;
pub type ModelProblemF64 = ModelProblem<f64>;
pub type ModelConfigF64 = ModelConfig<f64>;
pub type OuterConfigF64 = OuterConfig<f64>;
pub type RunReportF64 = RunReport<f64>;

pub type PrimalVectorF32 = PrimalVector<f32>;
pub type ModelProblemF32 = ModelProblem<f32>;
pub type OuterConfigF32 = OuterConfig<f32>;
pub type RunReportF32 = RunReport<f32>;
