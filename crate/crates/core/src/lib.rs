//! Partial penalized likelihood ratio tests for sparse generalized linear models.
//!
//! The crate fits Gaussian and logistic regressions in which only a chosen
//! subset of coefficients carries a folded-concave (SCAD, MCP) or Lasso
//! penalty, and builds likelihood ratio tests on top of those fits:
//!
//! ```
//! use pplr::{Dataset, Family, PenaltySpec, TestOptions, pplr_test};
//! use nalgebra::{DMatrix, DVector};
//!
//! let x = DMatrix::from_fn(40, 4, |i, j| (((i * 7 + j * 13) % 11) as f64 - 5.0) / 3.0);
//! let y = DVector::from_fn(40, |i, _| x[(i, 1)] * 2.0 + ((i % 3) as f64 - 1.0) * 0.5);
//! let data = Dataset::new(x, y, Family::Gaussian).unwrap();
//! let report = pplr_test(&data, &[0], PenaltySpec::scad(1.0).unwrap(), &TestOptions::default()).unwrap();
//! assert!(report.statistic >= 0.0 && report.p_value <= 1.0);
//! ```
//!
//! Monte Carlo studies ([`simulate`]) fan replicates out over a rayon pool
//! when the `parallel` feature is enabled (the default) and run them in
//! order otherwise; results are identical either way.

// Guards are written as `!(x > bound)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod distribution;
mod error;
pub mod glm;
pub mod inference;
pub mod penalty;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
pub use glm::{Dataset, Family};
pub use inference::{
    linear_test, linear_transform, noncentral_param, olr_test, partial_test, plr_test, pplr_test,
    run_test, Hypothesis, Method, TestOptions, TestReport,
};
pub use penalty::{PenaltyKind, PenaltySpec};
pub use solver::{
    fit, fit_path, fit_tuned, BicFit, FitProblem, FitResult, PathOptions, SolverOptions, Tuning,
};
