use std::sync::Arc;

use crate::bayesopt::{BoError, Evaluation, Objective};
use crate::vehicle::{
    run_lap, ControllerParams, LapResult, ReferenceTrajectory, SimConfig, VehicleError,
    VehicleParams,
};

/// Lap cost of a normalized tuning vector on one plant.
#[derive(Debug, Clone)]
pub struct LapObjective {
    plant: VehicleParams,
    reference: Arc<ReferenceTrajectory>,
    sim: SimConfig,
}

impl LapObjective {
    pub fn new(
        plant: VehicleParams,
        reference: Arc<ReferenceTrajectory>,
        sim: SimConfig,
    ) -> Result<Self, VehicleError> {
        plant.validate()?;
        sim.validate()?;
        Ok(Self {
            plant,
            reference,
            sim,
        })
    }

    pub fn plant(&self) -> &VehicleParams {
        &self.plant
    }

    pub fn sim(&self) -> &SimConfig {
        &self.sim
    }

    pub fn dnf_cost(&self) -> f64 {
        self.sim.dnf_cost
    }

    /// Full lap result; inputs a rounding error outside the cube are clamped.
    pub fn lap(&self, x: &[f64]) -> Result<LapResult, VehicleError> {
        let clamped: Vec<f64> = x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        run_lap(
            &ControllerParams::from_slice(&clamped)?,
            &self.plant,
            &self.reference,
            &self.sim,
        )
    }
}

impl Objective for LapObjective {
    fn dim(&self) -> usize {
        6
    }

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation, BoError> {
        let r = self.lap(x).map_err(|e| BoError::Objective {
            x: x.to_vec(),
            message: e.to_string(),
        })?;
        Ok(if r.is_dnf() {
            Evaluation::did_not_finish(r.cost)
        } else {
            Evaluation::finished(r.cost)
        })
    }
}
