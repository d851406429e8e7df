use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::control::{
    ControllerParams, ControllerRanges, LateralController, LateralGains, LongitudinalController,
    LongitudinalGains,
};
use super::plant::{integrate_step, ControlInput, VehicleParams, VehicleState};
use super::track::ReferenceTrajectory;
use super::VehicleError;

/// Vehicle model the controller's feedforward assumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedforwardModel {
    pub wheelbase: f64,
    pub understeer_gradient: f64,
}

impl Default for FeedforwardModel {
    fn default() -> Self {
        let nominal = VehicleParams::nominal();
        Self {
            wheelbase: nominal.wheelbase(),
            understeer_gradient: nominal.understeer_gradient(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Integration and control period [s].
    pub dt: f64,
    /// Cost assigned to laps that do not finish.
    pub dnf_cost: f64,
    /// Lateral error beyond which the lap is aborted [m].
    pub max_lateral_error: f64,
    /// Weights of the RMS lateral error, heading error and steering
    /// acceleration.
    pub weights: [f64; 3],
    /// Laps still running after this long count as not finished [s].
    pub time_limit: f64,
    /// Keep the full state history in the result.
    pub record_telemetry: bool,
    pub controller: ControllerRanges,
    pub longitudinal: LongitudinalGains,
    pub feedforward: FeedforwardModel,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            dnf_cost: 0.5,
            max_lateral_error: 3.0,
            weights: [1.0, 3.0, 0.03],
            time_limit: 120.0,
            record_telemetry: false,
            controller: ControllerRanges::default(),
            longitudinal: LongitudinalGains::default(),
            feedforward: FeedforwardModel::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), VehicleError> {
        let ok = self.dt > 0.0
            && self.dt.is_finite()
            && self.dnf_cost.is_finite()
            && self.max_lateral_error > 0.0
            && self.time_limit > 0.0
            && self.weights.iter().all(|w| w.is_finite() && *w >= 0.0)
            && self.longitudinal.force_limit > 0.0
            && self.feedforward.wheelbase > 0.0;
        if !ok {
            return Err(VehicleError::InvalidConfig(format!(
                "invalid simulation settings: {self:?}"
            )));
        }
        self.controller.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DnfReason {
    LateralError,
    NonFinite,
    Timeout,
}

/// One telemetry sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub t: f64,
    pub p_x: f64,
    pub p_y: f64,
    pub psi: f64,
    pub v_x: f64,
    pub v_y: f64,
    pub omega: f64,
    pub delta: f64,
    pub e_y: f64,
    pub e_psi: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Telemetry {
    pub e_y: Vec<f64>,
    pub e_psi: Vec<f64>,
    pub delta: Vec<f64>,
    /// Full rows, present when recording was requested.
    pub rows: Vec<TelemetryRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LapResult {
    pub e_y_rms: f64,
    pub e_psi_rms: f64,
    pub delta_ddot_rms: f64,
    pub cost: f64,
    pub dnf: Option<DnfReason>,
    pub lap_time: f64,
    pub telemetry: Telemetry,
}

impl LapResult {
    pub fn is_dnf(&self) -> bool {
        self.dnf.is_some()
    }
}

/// Root mean square of a series; 0 for an empty one.
pub fn rms(series: &[f64]) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    (series.iter().map(|v| v * v).sum::<f64>() / series.len() as f64).sqrt()
}

/// Second derivative by central differences, with second-order one-sided
/// stencils at both ends. Series shorter than four samples give zeros.
pub fn second_difference(series: &[f64], dt: f64) -> Vec<f64> {
    let n = series.len();
    if n < 4 {
        return vec![0.0; n];
    }
    let q = series;
    let h2 = dt * dt;
    let mut out = Vec::with_capacity(n);
    out.push((2.0 * q[0] - 5.0 * q[1] + 4.0 * q[2] - q[3]) / h2);
    for k in 1..n - 1 {
        out.push((q[k + 1] - 2.0 * q[k] + q[k - 1]) / h2);
    }
    out.push((2.0 * q[n - 1] - 5.0 * q[n - 2] + 4.0 * q[n - 3] - q[n - 4]) / h2);
    out
}

/// RMS terms and the weighted cost of a recorded lap.
pub fn lap_cost(e_y: &[f64], e_psi: &[f64], delta: &[f64], dt: f64, weights: [f64; 3]) -> [f64; 4] {
    let a = rms(e_y);
    let b = rms(e_psi);
    let c = rms(&second_difference(delta, dt));
    [a, b, c, weights[0] * a + weights[1] * b + weights[2] * c]
}

/// Start state: on the first waypoint, aligned with the path, at the
/// reference speed.
pub fn start_state(traj: &ReferenceTrajectory) -> VehicleState {
    let w = traj.waypoints()[0];
    VehicleState {
        px: w.x,
        py: w.y,
        psi: w.psi,
        vx: w.v,
        vy: 0.0,
        omega: 0.0,
    }
}

/// Simulates one closed lap with the given tuning vector.
pub fn run_lap(
    theta: &ControllerParams,
    plant: &VehicleParams,
    traj: &ReferenceTrajectory,
    sim: &SimConfig,
) -> Result<LapResult, VehicleError> {
    run_lap_from(theta, plant, traj, sim, start_state(traj))
}

pub fn run_lap_from(
    theta: &ControllerParams,
    plant: &VehicleParams,
    traj: &ReferenceTrajectory,
    sim: &SimConfig,
    start: VehicleState,
) -> Result<LapResult, VehicleError> {
    sim.validate()?;
    plant.validate()?;
    let dt = sim.dt;
    let gains = LateralGains::from_params(theta, &sim.controller);
    let mut lateral = LateralController::new(
        gains,
        sim.feedforward.wheelbase,
        sim.feedforward.understeer_gradient,
        dt,
    );
    let mut longitudinal = LongitudinalController::new(sim.longitudinal, dt);
    let length = traj.length();
    let max_steps = (sim.time_limit / dt).ceil() as usize;
    let capacity = ((length / 10.0) / dt) as usize;

    let mut tel = Telemetry {
        e_y: Vec::with_capacity(capacity),
        e_psi: Vec::with_capacity(capacity),
        delta: Vec::with_capacity(capacity),
        rows: Vec::new(),
    };
    let mut state = start;
    let first = traj.match_global(state.px, state.py, state.psi);
    let mut segment = first.segment;
    let mut prev_s = first.s;
    let mut progress = 0.0;
    let mut dnf = Some(DnfReason::Timeout);

    for k in 0..max_steps {
        let m = traj.match_from(segment, state.px, state.py, state.psi);
        segment = m.segment;
        let mut ds = m.s - prev_s;
        if ds < -0.5 * length {
            ds += length;
        } else if ds > 0.5 * length {
            ds -= length;
        }
        progress += ds;
        prev_s = m.s;
        if progress >= length {
            dnf = None;
            break;
        }
        if m.e_y.abs() > sim.max_lateral_error {
            dnf = Some(DnfReason::LateralError);
            break;
        }
        let delta = lateral.step(m.e_y, m.e_psi, m.kappa, m.v);
        let fx = longitudinal.step(m.v, state.vx);
        tel.e_y.push(m.e_y);
        tel.e_psi.push(m.e_psi);
        tel.delta.push(delta);
        if sim.record_telemetry {
            tel.rows.push(TelemetryRow {
                t: k as f64 * dt,
                p_x: state.px,
                p_y: state.py,
                psi: state.psi,
                v_x: state.vx,
                v_y: state.vy,
                omega: state.omega,
                delta,
                e_y: m.e_y,
                e_psi: m.e_psi,
            });
        }
        match integrate_step(&state, &ControlInput { delta, fx }, plant, dt) {
            Ok(next) => state = next,
            Err(_) => {
                dnf = Some(DnfReason::NonFinite);
                break;
            }
        }
    }

    let lap_time = tel.delta.len() as f64 * dt;
    let [e_y_rms, e_psi_rms, delta_ddot_rms, cost] =
        lap_cost(&tel.e_y, &tel.e_psi, &tel.delta, dt, sim.weights);
    Ok(LapResult {
        e_y_rms,
        e_psi_rms,
        delta_ddot_rms,
        cost: if dnf.is_some() { sim.dnf_cost } else { cost },
        dnf,
        lap_time,
        telemetry: tel,
    })
}

/// Writes telemetry rows as CSV with a header.
pub fn write_telemetry_csv(rows: &[TelemetryRow], path: &Path) -> Result<(), VehicleError> {
    let io = |e: std::io::Error| VehicleError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    for r in rows {
        w.serialize(r).map_err(|e| VehicleError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    w.flush().map_err(io)?;
    w.into_inner()
        .map_err(|e| VehicleError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .flush()
        .map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rms_of_constant_is_magnitude() {
        assert_eq!(rms(&[-0.25; 17]), 0.25);
        assert_eq!(rms(&[]), 0.0);
    }

    #[test]
    fn second_difference_is_exact_on_quadratics() {
        let dt = 0.01;
        let q: Vec<f64> = (0..20)
            .map(|k| 3.0 * (k as f64 * dt).powi(2) - k as f64 * dt)
            .collect();
        for v in second_difference(&q, dt) {
            assert!((v - 6.0).abs() < 1e-6, "{v}");
        }
    }
}
