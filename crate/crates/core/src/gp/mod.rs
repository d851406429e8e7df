//! Single-fidelity Gaussian process regression.
//!
//! The posterior engine in [`posterior`] is generic over a
//! [`CovarianceFunction`]; the plain Matérn-5/2 ARD case used throughout the
//! campaign is exposed as [`GpPosterior`]. The multi-fidelity models reuse the
//! same engine with their own structured kernels.

mod dataset;
mod hyper;
mod kernel;
mod posterior;

pub use dataset::{Dataset, Fidelity, ParamVector, Standardization};
pub use hyper::{
    fit_hyperparameters, fit_hyperparameters_from, log_marginal_likelihood, map_objective,
    GammaPrior, HyperFit, HyperPriorConfig, RestartRecord,
};
pub(crate) use hyper::{log_uniform, multistart, MapObjective};
pub use kernel::{matern52_ard, matern52_profile, CovarianceFunction, KernelHyperparams, Matern52};
pub(crate) use posterior::lml_with_gradient;
pub use posterior::{fit_posterior, Posterior, JITTER_LEVELS};

use thiserror::Error;

/// Posterior of a single-fidelity GP with a Matérn-5/2 ARD kernel.
pub type GpPosterior = Posterior<Matern52>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("covariance matrix not positive definite after jitter levels {attempted:?}")]
    NotPositiveDefinite { attempted: Vec<f64> },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("need at least {needed} data points, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("hyperparameter fitting failed: no restart produced a finite objective")]
    FitFailed,
    #[error("dataset is frozen and cannot be modified")]
    Frozen,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
