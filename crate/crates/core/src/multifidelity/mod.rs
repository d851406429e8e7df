//! Two-level multi-fidelity surrogates.
//!
//! [`Ar1Model`] is the linear auto-regressive scheme
//! `g_high(x) = rho * g_low(x) + delta(x)` fitted by maximizing the MAP
//! objective of the stacked two-level Gaussian; [`NargpModel`] replaces the
//! scaling by a GP over the augmented input `(x, mean_low(x))`.
//!
//! Both levels are standardized with the low level's mean and standard
//! deviation so that a linear relation between levels survives
//! standardization.

mod ar1;
mod nargp;

pub use ar1::{fit_ar1, fit_ar1_with, Ar1FitOptions, Ar1Hyperparams, Ar1Kernel, Ar1Model};
pub use nargp::{
    fit_nargp, fit_nargp_with, NargpFitOptions, NargpHyperparams, NargpKernel, NargpModel,
};

use serde::{Deserialize, Serialize};

use crate::gp::{Dataset, Fidelity, GpError, KernelHyperparams, Standardization};

/// Low- and high-fidelity observations sharing one input space.
///
/// Constructing the pair freezes the low level: from then on only the high
/// level may grow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiFidelityDataset {
    low: Dataset,
    high: Dataset,
}

impl MultiFidelityDataset {
    pub fn new(mut low: Dataset, high: Dataset) -> Result<Self, GpError> {
        if low.dim() != high.dim() {
            return Err(GpError::DimensionMismatch {
                expected: low.dim(),
                found: high.dim(),
            });
        }
        if low.fidelity() != Fidelity::Low || high.fidelity() != Fidelity::High {
            return Err(GpError::InvalidInput(format!(
                "expected (low, high) datasets, got ({:?}, {:?})",
                low.fidelity(),
                high.fidelity()
            )));
        }
        low.freeze();
        Ok(Self { low, high })
    }

    /// Pairs a frozen low-fidelity dataset with an empty high level.
    pub fn with_empty_high(low: Dataset) -> Result<Self, GpError> {
        let high = Dataset::new(low.dim(), Fidelity::High);
        Self::new(low, high)
    }

    pub fn dim(&self) -> usize {
        self.low.dim()
    }

    pub fn low(&self) -> &Dataset {
        &self.low
    }

    pub fn high(&self) -> &Dataset {
        &self.high
    }

    pub fn push_high(&mut self, x: Vec<f64>, y: f64) -> Result<(), GpError> {
        self.high.push(x, y)
    }

    /// Always refused once the pair exists: the low level is frozen.
    pub fn push_low(&mut self, x: Vec<f64>, y: f64) -> Result<(), GpError> {
        self.low.push(x, y)
    }

    /// Shared standardization, taken from the low level.
    pub fn standardization(&self) -> Standardization {
        self.low.standardization()
    }
}

/// Fits the low-level GP hyperparameters on standardized low data.
pub(crate) fn fit_low_level(
    low: &Dataset,
    std: &Standardization,
    priors: &crate::gp::HyperPriorConfig,
    restarts: usize,
    seed: u64,
    warm: Option<&KernelHyperparams>,
) -> Result<KernelHyperparams, GpError> {
    let z = standardized(low, std)?;
    Ok(crate::gp::fit_hyperparameters_from(&z, priors, restarts, seed, warm)?.hyperparams)
}

pub(crate) fn standardized(data: &Dataset, std: &Standardization) -> Result<Dataset, GpError> {
    Dataset::from_rows(
        data.dim(),
        data.fidelity(),
        data.inputs().to_vec(),
        std.apply_all(data.targets()),
    )
}
