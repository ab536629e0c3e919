//! Robust sparse regression and hypothesis testing for non-adaptive group
//! testing when the pooling matrix used in the lab differs from the one that
//! was specified.
//!
//! The measurement model is `y = A β* + δ* + η` where `A` is the specified
//! Rademacher pooling matrix, `δ*` collects the (sparse) errors induced by
//! bit-flips in the matrix actually used, and `η` is Gaussian noise. The
//! crate provides:
//!
//! - [`linmodel`]: the measurement model and exact forward evaluation;
//! - [`datagen`]: reproducible synthetic instances (signals, pooling
//!   matrices, adversarial bit-flips, noise);
//! - [`solvers`]: the joint robust Lasso over `(β, δ)`, plain L1/L2 Lasso
//!   variants, and a box-constrained QP engine used by the weight designs;
//! - [`debias`]: debiased estimates, the approximate-inverse and optimal
//!   weight-matrix designs, and the covariance diagonals that standardise
//!   the test statistics;
//! - [`hypotest`]: the DRLT/ODRLT tests for defective samples and erroneous
//!   pools, three baseline tests, and the statistical utilities they need;
//! - [`selection`]: regularization selection (normality-gated grid search
//!   plus cross-validation), Youden thresholds, and RANSAC fitting;
//! - [`harness`]: Monte Carlo experiment suites, metrics, and persistence.

pub mod datagen;
pub mod debias;
pub mod error;
pub mod harness;
pub mod hypotest;
pub mod linmodel;
pub mod mat;
pub mod selection;
pub mod solvers;

pub use error::DrltError;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, DrltError>;
