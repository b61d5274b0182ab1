//! Multiple imputation of a single incomplete variable in high-dimensional
//! data: sure independence screening, then sparse PCA or sufficient dimension
//! reduction, then proper Bayesian linear-regression draws. Also provides the
//! complete-data analyses, Rubin pooling, comparator methods and the Monte
//! Carlo harness used to evaluate them.

pub mod analysis;
pub mod baselines;
pub mod data;
pub mod error;
pub mod imputation;
pub mod linalg;
pub mod reference;
pub mod screening;
pub mod sdr;
pub mod simulation;
pub mod spca;
pub mod stochastic;

pub use error::{Error, Result};
