use serde::{Deserialize, Serialize};

use super::VehicleError;

/// Steering actuator limit [rad].
pub const STEER_LIMIT: f64 = 0.6;

/// Physical interval that a normalized parameter maps onto.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn map(&self, t: f64) -> f64 {
        self.lo + t * (self.hi - self.lo)
    }
}

/// Ranges for the six tuning parameters, in order: proportional, integral,
/// derivative gain on `e_y`, derivative filter time constant, heading gain,
/// output filter time constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerRanges {
    /// [rad/m]
    pub kp: Range,
    /// [rad/(m s)]
    pub ki: Range,
    /// [rad s/m]
    pub kd: Range,
    /// [s]
    pub derivative_filter: Range,
    /// [rad/rad]
    pub k_heading: Range,
    /// [s]
    pub output_filter: Range,
}

impl Default for ControllerRanges {
    fn default() -> Self {
        Self {
            kp: Range::new(0.0, 1.2),
            ki: Range::new(0.0, 0.1),
            kd: Range::new(0.0, 0.1),
            derivative_filter: Range::new(0.0, 0.3),
            k_heading: Range::new(0.0, 3.0),
            output_filter: Range::new(0.0, 0.05),
        }
    }
}

impl ControllerRanges {
    pub fn validate(&self) -> Result<(), VehicleError> {
        let all = [
            self.kp,
            self.ki,
            self.kd,
            self.derivative_filter,
            self.k_heading,
            self.output_filter,
        ];
        if all
            .iter()
            .all(|r| r.lo.is_finite() && r.hi.is_finite() && r.lo >= 0.0 && r.lo <= r.hi)
        {
            Ok(())
        } else {
            Err(VehicleError::InvalidConfig(format!(
                "bad controller ranges: {self:?}"
            )))
        }
    }
}

/// Normalized tuning vector `theta` in `[0, 1]^6`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams(pub [f64; 6]);

impl ControllerParams {
    pub fn new(theta: [f64; 6]) -> Result<Self, VehicleError> {
        if theta.iter().all(|t| (0.0..=1.0).contains(t)) {
            Ok(Self(theta))
        } else {
            Err(VehicleError::InvalidConfig(format!(
                "theta outside [0, 1]: {theta:?}"
            )))
        }
    }

    pub fn from_slice(theta: &[f64]) -> Result<Self, VehicleError> {
        let arr: [f64; 6] = theta.try_into().map_err(|_| {
            VehicleError::InvalidConfig(format!("expected 6 parameters, got {}", theta.len()))
        })?;
        Self::new(arr)
    }
}

/// Physical gains after applying the ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub derivative_filter: f64,
    pub k_heading: f64,
    pub output_filter: f64,
}

impl LateralGains {
    pub fn from_params(theta: &ControllerParams, ranges: &ControllerRanges) -> Self {
        let t = theta.0;
        Self {
            kp: ranges.kp.map(t[0]),
            ki: ranges.ki.map(t[1]),
            kd: ranges.kd.map(t[2]),
            derivative_filter: ranges.derivative_filter.map(t[3]),
            k_heading: ranges.k_heading.map(t[4]),
            output_filter: ranges.output_filter.map(t[5]),
        }
    }
}

/// Discrete first-order lag coefficient `1 - exp(-dt / T)`; 1 for `T = 0`.
pub fn lag_coefficient(time_constant: f64, dt: f64) -> f64 {
    if time_constant <= 0.0 {
        1.0
    } else {
        1.0 - (-dt / time_constant).exp()
    }
}

/// Feedforward plus filtered PID feedback on the lateral offset.
#[derive(Debug, Clone)]
pub struct LateralController {
    gains: LateralGains,
    wheelbase: f64,
    understeer_gradient: f64,
    derivative_alpha: f64,
    output_alpha: f64,
    dt: f64,
    integral: f64,
    derivative: f64,
    output: f64,
    prev_e_y: Option<f64>,
    saturated: f64,
}

impl LateralController {
    /// `wheelbase` and `understeer_gradient` describe the controller's
    /// internal vehicle model used for the feedforward term.
    pub fn new(gains: LateralGains, wheelbase: f64, understeer_gradient: f64, dt: f64) -> Self {
        Self {
            derivative_alpha: lag_coefficient(gains.derivative_filter, dt),
            output_alpha: lag_coefficient(gains.output_filter, dt),
            gains,
            wheelbase,
            understeer_gradient,
            dt,
            integral: 0.0,
            derivative: 0.0,
            output: 0.0,
            prev_e_y: None,
            saturated: 0.0,
        }
    }

    pub fn feedforward(&self, kappa: f64, v: f64) -> f64 {
        (self.wheelbase * kappa).atan() + self.understeer_gradient * v * v * kappa
    }

    /// Accumulated integral contribution (already multiplied by `k_i`).
    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// Filtered feedback output.
    pub fn feedback(&self) -> f64 {
        self.output
    }

    /// Advances the controller by one sample and returns the saturated
    /// steering angle.
    pub fn step(&mut self, e_y: f64, e_psi: f64, kappa: f64, v: f64) -> f64 {
        let g = &self.gains;
        let prev = self.prev_e_y.replace(e_y).unwrap_or(e_y);
        let raw_rate = (e_y - prev) / self.dt;
        self.derivative += self.derivative_alpha * (raw_rate - self.derivative);

        // Conditional integration: hold the integrator while the actuator is
        // saturated in the direction the integral would push.
        let push = -g.ki * e_y * self.dt;
        if self.saturated == 0.0 || push.signum() != self.saturated {
            self.integral += push;
        }

        let raw = -(g.kp * e_y + g.kd * self.derivative + g.k_heading * e_psi) + self.integral;
        self.output += self.output_alpha * (raw - self.output);
        let delta = self.feedforward(kappa, v) + self.output;
        let clamped = delta.clamp(-STEER_LIMIT, STEER_LIMIT);
        self.saturated = if clamped != delta {
            delta.signum()
        } else {
            0.0
        };
        clamped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LongitudinalGains {
    /// [N/(m/s)]
    pub kp: f64,
    /// [N/m]
    pub ki: f64,
    /// Traction limit [N].
    pub force_limit: f64,
}

impl Default for LongitudinalGains {
    fn default() -> Self {
        Self {
            kp: 3000.0,
            ki: 300.0,
            force_limit: 6000.0,
        }
    }
}

/// PI speed controller producing a saturated longitudinal force.
#[derive(Debug, Clone)]
pub struct LongitudinalController {
    gains: LongitudinalGains,
    dt: f64,
    integral: f64,
}

impl LongitudinalController {
    pub fn new(gains: LongitudinalGains, dt: f64) -> Self {
        Self {
            gains,
            dt,
            integral: 0.0,
        }
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    pub fn step(&mut self, v_ref: f64, v_x: f64) -> f64 {
        let err = v_ref - v_x;
        let limit = self.gains.force_limit;
        let unsat = self.gains.kp * err + self.integral;
        let force = unsat.clamp(-limit, limit);
        if force == unsat || err.signum() != unsat.signum() {
            self.integral += self.gains.ki * err * self.dt;
        }
        force
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gains(theta: [f64; 6]) -> LateralGains {
        LateralGains::from_params(
            &ControllerParams::new(theta).unwrap(),
            &ControllerRanges::default(),
        )
    }

    #[test]
    fn settles_to_zero_without_errors() {
        let mut c = LateralController::new(gains([0.5; 6]), 2.6, 0.0, 1e-3);
        let mut d = 1.0;
        for _ in 0..5000 {
            d = c.step(0.0, 0.0, 0.0, 15.0);
        }
        assert_eq!(d, 0.0);
    }

    #[test]
    fn zero_integral_gain_keeps_integrator_empty() {
        let mut c = LateralController::new(gains([0.7, 0.0, 0.4, 0.0, 0.5, 0.3]), 2.6, 0.0, 1e-3);
        for k in 0..2000 {
            c.step((k as f64 * 0.01).sin(), 0.1, 0.02, 14.0);
        }
        assert_eq!(c.integral(), 0.0);
    }

    #[test]
    fn output_filter_matches_first_order_step() {
        let dt = 1e-3;
        let mut g = gains([1.0, 0.0, 0.0, 0.0, 0.0, 0.5]);
        g.kp = 0.1;
        let tau = g.output_filter;
        let mut c = LateralController::new(g, 2.6, 0.0, dt);
        let steps = (tau / dt).round() as usize;
        let mut d = 0.0;
        for _ in 0..steps {
            d = c.step(-1.0, 0.0, 0.0, 10.0);
        }
        let expected = 0.1 * (1.0 - (-1.0f64).exp());
        assert!((d - expected).abs() / expected < 0.02, "{d} vs {expected}");
    }

    #[test]
    fn longitudinal_saturates_and_integrates() {
        let mut c = LongitudinalController::new(LongitudinalGains::default(), 1e-3);
        assert_eq!(c.step(30.0, 10.0), 6000.0);
        let mut c = LongitudinalController::new(LongitudinalGains::default(), 1e-3);
        c.step(10.5, 10.0);
        let i = c.integral();
        assert!(i > 0.0);
        assert_eq!(c.step(10.0, 10.0), i);
    }
}
