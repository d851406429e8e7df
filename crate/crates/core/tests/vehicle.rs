mod common;

use std::f64::consts::PI;

use common::rng;
use mfbo::study::MANUAL_BASELINE;
use mfbo::vehicle::{
    generate_oval_reference, integrate_step, lap_cost, perturb_plant, rms, run_lap, run_lap_from, start_state,
    tire_forces, ControlInput, ControllerParams, ControllerRanges, DnfReason, LateralController,
    LateralGains, LongitudinalController, LongitudinalGains, OvalConfig, Perturbation, ReferenceTrajectory,
    SimConfig, SpeedConfig, TireParams, VehicleParams, VehicleState,
};
use proptest::prelude::*;
use rand::Rng;

fn oval() -> ReferenceTrajectory {
    generate_oval_reference(&OvalConfig::default(), &SpeedConfig::default()).unwrap()
}

fn state(vx: f64, vy: f64, omega: f64) -> VehicleState {
    VehicleState {
        px: 0.0,
        py: 0.0,
        psi: 0.0,
        vx,
        vy,
        omega,
    }
}

fn simulate(mut s: VehicleState, input: ControlInput, p: &VehicleParams, dt: f64, t_end: f64) -> VehicleState {
    let n = (t_end / dt).round() as usize;
    for _ in 0..n {
        s = integrate_step(&s, &input, p, dt).unwrap();
    }
    s
}

// Tire

#[test]
fn straight_rolling_has_no_lateral_force() {
    let p = VehicleParams::nominal();
    assert_eq!(tire_forces(&state(15.0, 0.0, 0.0), 0.0, &p), (0.0, 0.0));
}

#[test]
fn tire_peak_sits_at_the_closed_form_slip() {
    let tire = TireParams { b: 10.0, c: 1.9, d: 4000.0 };
    // tan(pi / 3.8) / 10
    let expected = 0.108_628_957_511_291_2;
    assert!((tire.peak_slip() - expected).abs() < 1e-15);
    let (mut best_a, mut best_f) = (0.0, f64::MIN);
    for k in 0..=500_000 {
        let a = k as f64 * 1e-6;
        let f = tire.force(a);
        if f > best_f {
            (best_a, best_f) = (a, f);
        }
    }
    assert!((best_a - expected).abs() < 2e-6, "{best_a}");
    assert!((best_f - 4000.0).abs() < 1e-9 * 4000.0, "{best_f}");
    assert!((tire.force(expected) - 4000.0).abs() < 1e-9);
}

proptest! {
    #[test]
    fn tire_force_is_odd(a in -1.2..1.2f64, b in 4.0..14.0f64, c in 1.2..2.0f64, d in 1000.0..9000.0f64) {
        let t = TireParams { b, c, d };
        prop_assert!((t.force(a) + t.force(-a)).abs() <= 1e-12 * d);
        prop_assert!(t.force(a).abs() <= d * (1.0 + 1e-12));
    }
}

// Plant

#[test]
fn coasting_never_gains_kinetic_energy() {
    let p = VehicleParams::nominal();
    let energy = |s: &VehicleState| 0.5 * p.mass * (s.vx * s.vx + s.vy * s.vy) + 0.5 * p.yaw_inertia * s.omega * s.omega;
    let mut s = state(15.0, 1.0, 0.3);
    let input = ControlInput { delta: 0.0, fx: 0.0 };
    let mut e = energy(&s);
    for _ in 0..3000 {
        s = integrate_step(&s, &input, &p, 1e-3).unwrap();
        let next = energy(&s);
        assert!(next <= e * (1.0 + 1e-12), "{next} > {e}");
        e = next;
    }
    assert!(s.vy.abs() < 0.05 && s.omega.abs() < 0.05);
}

#[test]
fn steady_yaw_rate_matches_the_linear_bicycle() {
    let p = VehicleParams::nominal();
    let (v, delta, dt) = (15.0, 0.01, 1e-3);
    let mut s = state(v, 0.0, 0.0);
    for _ in 0..6000 {
        let fx = 8000.0 * (v - s.vx);
        s = integrate_step(&s, &ControlInput { delta, fx }, &p, dt).unwrap();
    }
    let l = p.wheelbase();
    let expected = s.vx * delta / (l + p.understeer_gradient() * s.vx * s.vx);
    assert!((s.omega - expected).abs() < 0.05 * expected, "{} vs {expected}", s.omega);
}

#[test]
fn rk4_converges_at_fourth_order() {
    let p = VehicleParams::nominal();
    let input = ControlInput { delta: 0.04, fx: 600.0 };
    let start = state(14.0, 0.4, 0.1);
    let end = |dt: f64| simulate(start, input, &p, dt, 10.0);
    let (a, b, c) = (end(0.04), end(0.02), end(0.01));
    let dist = |x: &VehicleState, y: &VehicleState| {
        let (x, y) = (x.to_array(), y.to_array());
        [0, 1, 3, 4, 5].iter().map(|&i| (x[i] - y[i]).powi(2)).sum::<f64>().sqrt()
    };
    let order = (dist(&a, &b) / dist(&b, &c)).log2();
    assert!((3.5..=4.5).contains(&order), "observed order {order}");
}

#[test]
fn rest_state_is_a_fixed_point() {
    let p = VehicleParams::nominal();
    let s = VehicleState {
        px: 3.0,
        py: -2.0,
        psi: 0.7,
        vx: 0.0,
        vy: 0.0,
        omega: 0.0,
    };
    let next = simulate(s, ControlInput { delta: 0.0, fx: 0.0 }, &p, 1e-3, 1.0);
    assert_eq!(next, s);
}

#[test]
fn force_free_motion_is_a_straight_line() {
    let p = VehicleParams::nominal();
    let psi: f64 = 0.6;
    let s = VehicleState {
        psi,
        ..state(12.0, 0.0, 0.0)
    };
    let end = simulate(s, ControlInput { delta: 0.0, fx: 0.0 }, &p, 1e-3, 5.0);
    assert!((end.px - 60.0 * psi.cos()).abs() < 1e-9);
    assert!((end.py - 60.0 * psi.sin()).abs() < 1e-9);
    assert_eq!(end.vx, 12.0);
    assert_eq!(end.psi, psi);
}

#[test]
fn perturbations_touch_only_their_fields() {
    let nominal = VehicleParams::nominal();
    assert_eq!(perturb_plant(&nominal, &Perturbation::default()).unwrap(), nominal);

    let heavy = perturb_plant(&nominal, &Perturbation { mass_delta: Some(-300.0), ..Default::default() }).unwrap();
    assert_eq!(heavy.mass, 1200.0);
    assert_eq!(VehicleParams { mass: nominal.mass, ..heavy }, nominal);

    let grippy = perturb_plant(&nominal, &Perturbation { peak_force_scale: Some(1.03), ..Default::default() }).unwrap();
    assert_eq!(grippy.front.d, nominal.front.d * 1.03);
    assert_eq!(grippy.rear.d, nominal.rear.d * 1.03);
    assert_eq!(grippy.mass, nominal.mass);

    let shifted = perturb_plant(&nominal, &Perturbation { lf_delta: Some(0.1), ..Default::default() }).unwrap();
    assert!((shifted.wheelbase() - nominal.wheelbase()).abs() < 1e-12);
    assert!((shifted.lf - 1.14).abs() < 1e-12);
}

// Reference trajectory

#[test]
fn oval_geometry() {
    let cfg = OvalConfig {
        transition_length: 0.0,
        ..OvalConfig::default()
    };
    let t = generate_oval_reference(&cfg, &SpeedConfig::default()).unwrap();
    let expected = 2.0 * 150.0 + 2.0 * PI * 30.0;
    let w = t.waypoints();
    let polyline: f64 = (0..w.len())
        .map(|i| {
            let (a, b) = (&w[i], &w[(i + 1) % w.len()]);
            (b.x - a.x).hypot(b.y - a.y)
        })
        .sum();
    assert!((polyline - expected).abs() < 1e-3 * expected, "{polyline}");
    assert!((t.length() - expected).abs() < 1e-3 * expected);

    for wp in w {
        let on_straight = wp.s < 74.0 || (76.0 + 30.0 * PI..224.0 + 30.0 * PI).contains(&wp.s);
        let on_arc = (76.0..75.0 + 30.0 * PI - 1.0).contains(&wp.s);
        if on_straight {
            assert_eq!(wp.kappa, 0.0, "s = {}", wp.s);
        }
        if on_arc {
            assert!((wp.kappa - 1.0 / 30.0).abs() < 1e-12, "s = {}", wp.s);
        }
        assert!(wp.v <= 20.0);
    }
    assert_eq!(w[0].v, 20.0);
    let (gap, heading) = t.seam_gap();
    assert!(gap < 1e-6 && heading < 1e-9);
}

/// Distance from `(x, y)` to the closed polyline through `pts`.
fn polyline_distance(pts: &[(f64, f64)], x: f64, y: f64) -> f64 {
    let n = pts.len();
    let nearest = (0..n)
        .min_by(|&i, &j| {
            let di = (pts[i].0 - x).hypot(pts[i].1 - y);
            let dj = (pts[j].0 - x).hypot(pts[j].1 - y);
            di.total_cmp(&dj)
        })
        .unwrap();
    [(nearest + n - 1) % n, nearest]
        .iter()
        .map(|&i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let u = (((x - a.0) * dx + (y - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
            (a.0 + u * dx - x).hypot(a.1 + u * dy - y)
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn projection_agrees_with_brute_force_on_a_dense_resampling() {
    let t = oval();
    let dense_cfg = OvalConfig {
        spacing: 0.05,
        ..OvalConfig::default()
    };
    let dense = generate_oval_reference(&dense_cfg, &SpeedConfig::default()).unwrap();
    let pts: Vec<(f64, f64)> = dense.waypoints().iter().map(|w| (w.x, w.y)).collect();
    let mut r = rng(8);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let w = dense.waypoints()[r.random_range(0..pts.len())];
        let offset = r.random_range(0.3..2.5) * if r.random::<bool>() { 1.0 } else { -1.0 };
        let (x, y) = (w.x - offset * w.psi.sin(), w.y + offset * w.psi.cos());
        let m = t.match_global(x, y, w.psi);
        let brute = polyline_distance(&pts, x, y);
        worst = worst.max((m.e_y.abs() - brute).abs());
        assert_eq!(m.e_y.signum(), offset.signum());
    }
    assert!(worst < 1e-3, "worst mismatch {worst} m");
}

#[test]
fn matching_on_and_beside_the_path() {
    let t = oval();
    for i in [0, 180, 400, 700] {
        let w = t.waypoints()[i];
        let m = t.match_global(w.x, w.y, w.psi);
        assert!(m.e_y.abs() < 1e-9 && m.e_psi.abs() < 1e-9, "waypoint {i}");
        let left = t.match_global(w.x - w.psi.sin(), w.y + w.psi.cos(), w.psi);
        assert!((left.e_y - 1.0).abs() < 1e-6, "waypoint {i}: {}", left.e_y);
    }
}

// Controllers

fn lateral(theta: [f64; 6], dt: f64) -> LateralController {
    let gains = LateralGains::from_params(&ControllerParams::new(theta).unwrap(), &ControllerRanges::default());
    let p = VehicleParams::nominal();
    LateralController::new(gains, p.wheelbase(), p.understeer_gradient(), dt)
}

#[test]
fn zero_errors_on_a_straight_give_zero_steering() {
    let mut c = lateral(MANUAL_BASELINE, 1e-3);
    for _ in 0..100 {
        assert_eq!(c.step(0.0, 0.0, 0.0, 18.0), 0.0);
    }
}

#[test]
fn without_integral_gain_the_integrator_stays_empty() {
    let mut c = lateral([0.6, 0.0, 0.5, 0.0, 0.4, 0.3], 1e-3);
    let mut r = rng(2);
    for _ in 0..2000 {
        c.step(r.random_range(-1.0..1.0), r.random_range(-0.2..0.2), 0.0, 15.0);
        assert_eq!(c.integral(), 0.0);
    }
}

#[test]
fn output_filter_step_response() {
    let dt = 1e-3;
    let time_constant = ControllerRanges::default().output_filter.map(1.0);
    let mut c = lateral([0.5, 0.0, 0.0, 0.0, 0.0, 1.0], dt);
    let n = (time_constant / dt).round() as usize;
    let mut at_t = 0.0;
    for k in 1..=20 * n {
        let d = c.step(0.2, 0.0, 0.0, 15.0);
        if k == n {
            at_t = d;
        }
    }
    let final_value = c.feedback();
    let fraction = at_t / final_value;
    let expected = 1.0 - (-1.0f64).exp();
    assert!((fraction - expected).abs() < 0.02 * expected, "{fraction}");
}

#[test]
fn speed_controller_at_reference_outputs_its_integral() {
    let mut c = LongitudinalController::new(LongitudinalGains::default(), 1e-3);
    for _ in 0..50 {
        c.step(20.0, 19.5);
    }
    let held = c.integral();
    assert!(held > 0.0);
    assert_eq!(c.step(20.0, 20.0), held);
    assert_eq!(c.step(20.0, 0.0), 6000.0);
    assert_eq!(c.step(0.0, 40.0), -6000.0);
}

#[test]
fn speed_settles_within_five_seconds() {
    let p = VehicleParams::nominal();
    let dt = 1e-3;
    let mut c = LongitudinalController::new(LongitudinalGains::default(), dt);
    let mut s = state(15.0, 0.0, 0.0);
    let mut last_outside = 0.0;
    for k in 1..=10_000 {
        let fx = c.step(20.0, s.vx);
        s = integrate_step(&s, &ControlInput { delta: 0.0, fx }, &p, dt).unwrap();
        if (s.vx - 20.0).abs() > 0.02 * 20.0 {
            last_outside = k as f64 * dt;
        }
    }
    assert!(last_outside < 5.0, "left the band at {last_outside} s");
}

// Laps

#[test]
fn rms_of_a_constant() {
    for c in [-3.5, 0.0, 1e-4, 7.25] {
        assert!((rms(&[c; 37]) - c.abs()).abs() < 1e-12);
    }
}

#[test]
fn zero_gains_leave_the_track() {
    let t = oval();
    let sim = SimConfig::default();
    let lap = run_lap(&ControllerParams::new([0.0; 6]).unwrap(), &VehicleParams::nominal(), &t, &sim).unwrap();
    assert_eq!(lap.dnf, Some(DnfReason::LateralError));
    assert_eq!(lap.cost, 0.5);
    assert!(lap.lap_time < 15.0, "{}", lap.lap_time);
}

/// Kinematic car with its reference point on the rear axle, driven by the
/// lateral controller with every feedback gain at zero.
#[test]
fn feedforward_alone_tracks_a_kinematic_car() {
    let t = oval();
    let l = 2.6;
    let dt = 1e-3;
    let mut c = LateralController::new(
        LateralGains::from_params(&ControllerParams::new([0.0; 6]).unwrap(), &ControllerRanges::default()),
        l,
        0.0,
        dt,
    );
    let s0 = start_state(&t);
    let (mut x, mut y, mut psi) = (s0.px, s0.py, s0.psi);
    let (mut segment, mut travelled) = (0, 0.0);
    let mut errors = Vec::new();
    while travelled < t.length() {
        let m = t.match_from(segment, x, y, psi);
        segment = m.segment;
        assert!(m.e_y.abs() < 3.0);
        errors.push(m.e_y);
        let delta = c.step(m.e_y, m.e_psi, m.kappa, m.v);
        let w = m.v * delta.tan() / l;
        if w.abs() < 1e-12 {
            x += m.v * dt * psi.cos();
            y += m.v * dt * psi.sin();
        } else {
            x += m.v / w * ((psi + w * dt).sin() - psi.sin());
            y -= m.v / w * ((psi + w * dt).cos() - psi.cos());
        }
        psi += w * dt;
        travelled += m.v * dt;
    }
    assert!(rms(&errors) < 0.05, "{}", rms(&errors));
}

#[test]
fn recorded_series_reproduce_the_cost() {
    let t = oval();
    let sim = SimConfig {
        record_telemetry: true,
        ..SimConfig::default()
    };
    let lap = run_lap(&ControllerParams::new(MANUAL_BASELINE).unwrap(), &VehicleParams::nominal(), &t, &sim).unwrap();
    assert!(!lap.is_dnf());
    let tel = &lap.telemetry;
    let rms_of = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let q = &tel.delta;
    let h2 = sim.dt * sim.dt;
    let n = q.len();
    let mut acc = vec![(2.0 * q[0] - 5.0 * q[1] + 4.0 * q[2] - q[3]) / h2];
    acc.extend((1..n - 1).map(|k| (q[k + 1] - 2.0 * q[k] + q[k - 1]) / h2));
    acc.push((2.0 * q[n - 1] - 5.0 * q[n - 2] + 4.0 * q[n - 3] - q[n - 4]) / h2);
    let j = rms_of(&tel.e_y) + 3.0 * rms_of(&tel.e_psi) + 0.03 * rms_of(&acc);
    assert!((lap.cost - j).abs() < 1e-12 * j, "{} vs {j}", lap.cost);
    let terms = lap_cost(&tel.e_y, &tel.e_psi, &tel.delta, sim.dt, sim.weights);
    assert_eq!(terms[3], lap.cost);
}

#[test]
fn mirrored_track_gives_the_same_cost() {
    let t = oval();
    let m = t.mirrored();
    let plant = VehicleParams::nominal();
    let sim = SimConfig::default();
    for theta in [MANUAL_BASELINE, [0.7, 0.2, 0.5, 0.4, 0.6, 0.2]] {
        let theta = ControllerParams::new(theta).unwrap();
        let a = run_lap(&theta, &plant, &t, &sim).unwrap();
        let b = run_lap_from(&theta, &plant, &m, &sim, start_state(&m)).unwrap();
        assert!(!a.is_dnf());
        assert!((a.cost - b.cost).abs() < 1e-9, "{} vs {}", a.cost, b.cost);
    }
}

#[test]
fn halving_the_step_barely_moves_the_cost() {
    let t = oval();
    let plant = VehicleParams::nominal();
    for theta in [MANUAL_BASELINE, [0.7, 0.2, 0.5, 0.4, 0.6, 0.2]] {
        let theta = ControllerParams::new(theta).unwrap();
        let coarse = run_lap(&theta, &plant, &t, &SimConfig::default()).unwrap();
        let fine = run_lap(&theta, &plant, &t, &SimConfig { dt: 5e-4, ..SimConfig::default() }).unwrap();
        assert!(!coarse.is_dnf() && !fine.is_dnf());
        let rel = (coarse.cost - fine.cost).abs() / fine.cost;
        assert!(rel < 5e-3, "relative change {rel}");
    }
}
