use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::VehicleError;

pub const GRAVITY: f64 = 9.81;

/// Slip angles are computed with `v_x` clamped to at least this value.
pub const VELOCITY_FLOOR: f64 = 1.0;

/// Friction coefficient behind the nominal peak tire forces.
pub const FRICTION: f64 = 1.0;

/// Simplified Magic Formula coefficients for one axle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TireParams {
    pub b: f64,
    pub c: f64,
    /// Peak lateral force [N].
    pub d: f64,
}

impl TireParams {
    /// `D sin(C atan(B alpha))`.
    pub fn force(&self, alpha: f64) -> f64 {
        self.d * (self.c * (self.b * alpha).atan()).sin()
    }

    /// Slope at zero slip, `B C D`.
    pub fn cornering_stiffness(&self) -> f64 {
        self.b * self.c * self.d
    }

    /// Slip angle at which the force peaks, valid for `C > 1`.
    pub fn peak_slip(&self) -> f64 {
        (PI / (2.0 * self.c)).tan() / self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Mass [kg].
    pub mass: f64,
    /// Yaw inertia [kg m^2].
    pub yaw_inertia: f64,
    /// CG to front axle [m].
    pub lf: f64,
    /// CG to rear axle [m].
    pub lr: f64,
    pub front: TireParams,
    pub rear: TireParams,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self::nominal()
    }
}

impl VehicleParams {
    /// Compact-hatchback defaults. Peak axle forces equal the static axle
    /// load times a friction coefficient of 1.
    pub fn nominal() -> Self {
        let (mass, lf, lr) = (1500.0, 1.04, 1.56);
        let wheelbase = lf + lr;
        let peak = FRICTION * mass * GRAVITY;
        Self {
            mass,
            yaw_inertia: 2500.0,
            lf,
            lr,
            front: TireParams {
                b: 10.0,
                c: 1.9,
                d: peak * lr / wheelbase,
            },
            rear: TireParams {
                b: 10.0,
                c: 1.9,
                d: peak * lf / wheelbase,
            },
        }
    }

    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    /// Linear-bicycle understeer gradient [rad / (m/s^2)].
    pub fn understeer_gradient(&self) -> f64 {
        self.mass / self.wheelbase()
            * (self.lr / self.front.cornering_stiffness()
                - self.lf / self.rear.cornering_stiffness())
    }

    pub fn validate(&self) -> Result<(), VehicleError> {
        let values = [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("lf", self.lf),
            ("lr", self.lr),
            ("front.b", self.front.b),
            ("front.c", self.front.c),
            ("front.d", self.front.d),
            ("rear.b", self.rear.b),
            ("rear.c", self.rear.c),
            ("rear.d", self.rear.d),
        ];
        for (name, v) in values {
            if !(v.is_finite() && v > 0.0) {
                return Err(VehicleError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Parameter changes applied to a plant. Unset fields leave the plant as is.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    /// Added to the mass [kg].
    pub mass_delta: Option<f64>,
    /// Added to `l_f` [m]; `l_r` absorbs the opposite change.
    pub lf_delta: Option<f64>,
    /// Multiplies both peak forces `D_f` and `D_r`.
    pub peak_force_scale: Option<f64>,
}

impl Perturbation {
    pub fn is_empty(&self) -> bool {
        self.mass_delta.is_none() && self.lf_delta.is_none() && self.peak_force_scale.is_none()
    }
}

/// Applies `spec` to a copy of `nominal`, keeping the wheelbase fixed.
pub fn perturb_plant(
    nominal: &VehicleParams,
    spec: &Perturbation,
) -> Result<VehicleParams, VehicleError> {
    let mut p = *nominal;
    if let Some(dm) = spec.mass_delta {
        p.mass += dm;
    }
    if let Some(dl) = spec.lf_delta {
        p.lf += dl;
        p.lr -= dl;
    }
    if let Some(k) = spec.peak_force_scale {
        p.front.d *= k;
        p.rear.d *= k;
    }
    p.validate()?;
    Ok(p)
}

/// Single-track state. Position and heading are global, velocities are in
/// the body frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub px: f64,
    pub py: f64,
    pub psi: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl VehicleState {
    pub fn to_array(&self) -> [f64; 6] {
        [self.px, self.py, self.psi, self.vx, self.vy, self.omega]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            px: a[0],
            py: a[1],
            psi: a[2],
            vx: a[3],
            vy: a[4],
            omega: a[5],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ControlInput {
    /// Steering angle [rad].
    pub delta: f64,
    /// Longitudinal force [N].
    pub fx: f64,
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Front and rear lateral tire forces.
pub fn tire_forces(state: &VehicleState, delta: f64, params: &VehicleParams) -> (f64, f64) {
    let vx = state.vx.max(VELOCITY_FLOOR);
    let alpha_f = delta - ((state.vy + state.omega * params.lf) / vx).atan();
    let alpha_r = -((state.vy - state.omega * params.lr) / vx).atan();
    (params.front.force(alpha_f), params.rear.force(alpha_r))
}

/// State derivative of the single-track model.
pub fn dynamics(state: &VehicleState, input: &ControlInput, params: &VehicleParams) -> [f64; 6] {
    let (ff, fr) = tire_forces(state, input.delta, params);
    let (sd, cd) = input.delta.sin_cos();
    let (sp, cp) = state.psi.sin_cos();
    let m = params.mass;
    let front_lat = input.fx * sd + ff * cd;
    [
        state.vx * cp - state.vy * sp,
        state.vx * sp + state.vy * cp,
        state.omega,
        (input.fx * cd - ff * sd + m * state.vy * state.omega) / m,
        (front_lat + fr - m * state.vx * state.omega) / m,
        (front_lat * params.lf - fr * params.lr) / params.yaw_inertia,
    ]
}

/// One classical RK4 step with the input held constant; the heading is
/// wrapped afterwards.
pub fn integrate_step(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState, VehicleError> {
    rk4(state, dt, |s| dynamics(s, input, params))
}

pub(crate) fn rk4<F>(state: &VehicleState, dt: f64, f: F) -> Result<VehicleState, VehicleError>
where
    F: Fn(&VehicleState) -> [f64; 6],
{
    let x = state.to_array();
    let shifted = |k: &[f64; 6], h: f64| {
        let mut y = x;
        for (yi, ki) in y.iter_mut().zip(k) {
            *yi += h * ki;
        }
        VehicleState::from_array(y)
    };
    let k1 = f(state);
    let k2 = f(&shifted(&k1, 0.5 * dt));
    let k3 = f(&shifted(&k2, 0.5 * dt));
    let k4 = f(&shifted(&k3, dt));
    let mut y = x;
    for i in 0..6 {
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    y[2] = wrap_angle(y[2]);
    let next = VehicleState::from_array(y);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(VehicleError::SimulationFault { state: *state })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_coasting_only_moves_position() {
        let p = VehicleParams::nominal();
        let s = VehicleState {
            psi: 0.3,
            vx: 12.0,
            ..Default::default()
        };
        let d = dynamics(&s, &ControlInput::default(), &p);
        assert!((d[0] - 12.0 * 0.3f64.cos()).abs() < 1e-12);
        assert!((d[1] - 12.0 * 0.3f64.sin()).abs() < 1e-12);
        assert_eq!(&d[2..], &[0.0; 4]);
    }

    #[test]
    fn zero_slip_gives_zero_force() {
        let s = VehicleState {
            vx: 10.0,
            ..Default::default()
        };
        assert_eq!(tire_forces(&s, 0.0, &VehicleParams::nominal()), (0.0, 0.0));
    }

    #[test]
    fn nominal_plant_is_neutral_steer() {
        assert!(VehicleParams::nominal().understeer_gradient().abs() < 1e-15);
    }

    #[test]
    fn wrap_stays_in_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((wrap_angle(-7.0) - (-7.0 + 2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn perturbation_preserves_wheelbase() {
        let nom = VehicleParams::nominal();
        let p = perturb_plant(
            &nom,
            &Perturbation {
                lf_delta: Some(-0.1),
                ..Default::default()
            },
        )
        .unwrap();
        assert!((p.wheelbase() - nom.wheelbase()).abs() < 1e-15);
        assert!((p.lf - 0.94).abs() < 1e-15);
        assert_eq!(p.front, nom.front);
    }

    #[test]
    fn invalid_perturbation_is_rejected() {
        let spec = Perturbation {
            mass_delta: Some(-2000.0),
            ..Default::default()
        };
        assert!(perturb_plant(&VehicleParams::nominal(), &spec).is_err());
    }
}
