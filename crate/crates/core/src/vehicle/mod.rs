//! Closed-loop single-track vehicle simulator used as the black-box cost.
//!
//! A lap runs the lateral controller (feedforward plus six-parameter
//! filtered PID) and a fixed PI speed controller against an oval reference,
//! integrating the plant with RK4. The cost weights RMS lateral error, RMS
//! heading error and RMS steering acceleration; laps that leave the 3 m
//! corridor get a fixed heuristic cost instead.

mod control;
mod lap;
mod plant;
mod track;

pub use control::{
    lag_coefficient, ControllerParams, ControllerRanges, LateralController, LateralGains,
    LongitudinalController, LongitudinalGains, Range, STEER_LIMIT,
};
pub use lap::{
    lap_cost, rms, run_lap, run_lap_from, second_difference, start_state, write_telemetry_csv,
    DnfReason, FeedforwardModel, LapResult, SimConfig, Telemetry, TelemetryRow,
};
pub use plant::{
    dynamics, integrate_step, perturb_plant, tire_forces, wrap_angle, ControlInput, Perturbation,
    TireParams, VehicleParams, VehicleState, FRICTION, GRAVITY, VELOCITY_FLOOR,
};
pub use track::{
    generate_oval_reference, match_reference, MatchResult, OvalConfig, ReferenceTrajectory,
    SpeedConfig, Waypoint,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VehicleError {
    #[error("invalid vehicle configuration: {0}")]
    InvalidConfig(String),
    #[error("simulation produced a non-finite state from {state:?}")]
    SimulationFault { state: VehicleState },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Everything needed to turn a tuning vector into a lap cost.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleConfig {
    pub plant: VehicleParams,
    pub track: OvalConfig,
    pub speed: SpeedConfig,
    pub sim: SimConfig,
}

impl VehicleConfig {
    pub fn validate(&self) -> Result<(), VehicleError> {
        self.plant.validate()?;
        self.sim.validate()
    }

    pub fn reference(&self) -> Result<ReferenceTrajectory, VehicleError> {
        generate_oval_reference(&self.track, &self.speed)
    }
}
