//! Consistent linear regression when the covariates are observed with
//! additive noise or with missing entries.
//!
//! The moment-correction estimators in [`estimators`] replace the biased
//! plug-in `Z^T Z` with an unbiased surrogate of the covariance. [`omp`]
//! adds greedy support selection for sparse regressors, [`datagen`] draws
//! the synthetic problems, [`experiments`] runs seeded Monte-Carlo sweeps and
//! [`concentration`] checks the sample-size scaling of the random quantities
//! the error bounds rely on.

pub mod concentration;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod omp;
pub mod rng;

#[cfg(feature = "cli")]
pub mod cli;

mod par;

pub use error::{Error, Result};
