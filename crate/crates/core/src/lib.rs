//! Generalized low-rank models with composite hurdle loss.
//!
//! Data tables whose variables contain a frequently occurring "interesting"
//! value (excess zeros in defect counts, or missingness itself) are fitted
//! with a low-rank factorization X*Y under a per-column loss that pairs a
//! binary loss on the interesting-value indicator with a gated loss on the
//! remaining values. The crate provides the scalar loss catalog, the hurdle
//! composite, an alternating damped-Newton solver with offsets, scaling and
//! quadratic regularization, reconstruction and imputation, diagnostics
//! (loss explained, ROC/AUC, column association), seeded synthetic data
//! generators, and baseline imputation methods.

pub mod baselines;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod hurdle;
pub mod io;
pub mod loss;
pub mod simgen;
pub mod solver;
pub mod table;

pub use error::{Error, Result};
pub use hurdle::{HurdleMode, HurdleSpec, Nu};
pub use loss::Loss;
pub use solver::{FitConfig, Factorization};
pub use table::{ColumnModel, DataTable};
