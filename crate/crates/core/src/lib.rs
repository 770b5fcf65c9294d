//! Sparse linear regression that is robust to outliers in the response.
//!
//! The model is the mean-shift regression `y = X beta + sqrt(n) gamma + eps`
//! with sparse `beta` and sparse outlier parameters `gamma`. Estimation runs
//! in two stages:
//!
//! 1. a lasso on the extended design `(X, sqrt(n) I_n)` screens candidate
//!    supports ([`preliminary`]);
//! 2. an alternating minimization refines `(beta, gamma)` with adaptive
//!    weighted-l1 steps for `beta` and a thresholding rule for `gamma`
//!    ([`robust`]).
//!
//! Tuning parameters are chosen by BIC ([`selection`]). Everything numeric is
//! generic over [`Float`]; the aliases at the crate root fix `f64`.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod float;
pub mod io;
pub mod lasso;
pub mod model;
pub mod preliminary;
pub mod robust;
pub mod selection;
pub mod simulation;
pub mod thresholding;

pub use error::{Error, Result};
pub use float::Float;
pub use model::{normalize_columns, objective, support, FitResult, TuningParams, Weights};
pub use thresholding::ThresholdingRule;

pub type Dataset = model::Dataset<f64>;
pub type Rule = thresholding::ThresholdingRule<f64>;
pub type Fit = model::FitResult<f64>;
pub type Tuning = model::TuningParams<f64>;
pub type AdaptiveWeights = model::Weights<f64>;
pub type Preliminary = preliminary::PreliminaryFit<f64>;
pub type Options = lasso::SolverOptions<f64>;
pub type PipelineConfig = selection::PipelineConfig<f64>;
pub type PipelineResult = selection::PipelineResult<f64>;
pub type EigenReport = diagnostics::EigenReport<f64>;
