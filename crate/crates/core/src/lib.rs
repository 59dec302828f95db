//! Out-of-sample risk estimation for penalized generalized linear models.
//!
//! The crate fits `argmin_β Σ ℓ(y_i | x_iᵀβ) + λ r(β)` and estimates the
//! out-of-sample error of the fit with exact leave-one-out cross validation,
//! its one-Newton-step approximation (ALO) and K-fold cross validation. It
//! also ships closed-form and Monte-Carlo oracles for the true out-of-sample
//! error, the finite-sample error-bound constants for these estimators, and a
//! seeded simulation harness.

pub mod bounds;
pub mod config;
pub mod datagen;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod losses;
pub mod oracles;
pub mod regularizers;
pub mod report;
pub mod risk;
pub mod selftest;
pub mod solver;

pub use error::{Error, Result};
pub use losses::{ErrorFn, Loss, LossEval};
pub use regularizers::{RegEval, Regularizer};
pub use solver::{fit, fit_leave_one_out, Dataset, FitResult, ModelSpec, SolverOpts};
