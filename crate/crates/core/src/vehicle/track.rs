use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::VehicleError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OvalConfig {
    pub straight_length: f64,
    pub radius: f64,
    /// Length over which the curvature blends between straight and arc.
    pub transition_length: f64,
    /// Upper bound on the waypoint spacing.
    pub spacing: f64,
}

impl Default for OvalConfig {
    fn default() -> Self {
        Self {
            straight_length: 150.0,
            radius: 30.0,
            transition_length: 8.0,
            spacing: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedConfig {
    pub v_max: f64,
    pub a_lat_max: f64,
    pub a_long_max: f64,
}

impl Default for SpeedConfig {
    fn default() -> Self {
        Self {
            v_max: 20.0,
            a_lat_max: 7.0,
            a_long_max: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    /// Unwrapped heading [rad].
    pub psi: f64,
    pub kappa: f64,
    /// `d kappa / ds`.
    pub dkappa: f64,
    pub v: f64,
}

/// Closed reference path sampled at waypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    waypoints: Vec<Waypoint>,
    /// Speed slopes `dv/ds`, one per waypoint.
    dv: Vec<f64>,
    length: f64,
}

/// Result of projecting a position onto the reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    pub segment: usize,
    /// Position within the segment, in `[0, 1]`.
    pub u: f64,
    /// Arc length of the matched point.
    pub s: f64,
    pub x: f64,
    pub y: f64,
    /// Signed lateral offset, positive to the left of the path.
    pub e_y: f64,
    pub e_psi: f64,
    pub kappa: f64,
    pub v: f64,
}

/// Raised-cosine step on `[0, 1]`.
fn blend(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        0.5 * (1.0 - (PI * u).cos())
    }
}

fn blend_slope(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        0.5 * PI * (PI * u).sin()
    }
}

fn blend_integral(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        u - 0.5
    } else {
        0.5 * (u - (PI * u).sin() / PI)
    }
}

struct OvalProfile {
    kappa0: f64,
    transition: f64,
    /// Junction positions with +1 for arc entry and -1 for arc exit.
    junctions: [(f64, f64); 4],
}

impl OvalProfile {
    fn new(cfg: &OvalConfig) -> Self {
        let half = 0.5 * cfg.straight_length;
        let arc = PI * cfg.radius;
        let j1 = half;
        let j2 = j1 + arc;
        let j3 = j2 + cfg.straight_length;
        let j4 = j3 + arc;
        Self {
            kappa0: 1.0 / cfg.radius,
            transition: cfg.transition_length,
            junctions: [(j1, 1.0), (j2, -1.0), (j3, 1.0), (j4, -1.0)],
        }
    }

    fn arg(&self, s: f64, j: f64) -> f64 {
        (s - j) / self.transition + 0.5
    }

    fn kappa(&self, s: f64) -> f64 {
        self.kappa0
            * self
                .junctions
                .iter()
                .map(|&(j, sg)| sg * blend(self.arg(s, j)))
                .sum::<f64>()
    }

    fn dkappa(&self, s: f64) -> f64 {
        self.kappa0 / self.transition
            * self
                .junctions
                .iter()
                .map(|&(j, sg)| sg * blend_slope(self.arg(s, j)))
                .sum::<f64>()
    }

    fn heading(&self, s: f64) -> f64 {
        self.kappa0
            * self.transition
            * self
                .junctions
                .iter()
                .map(|&(j, sg)| sg * blend_integral(self.arg(s, j)))
                .sum::<f64>()
    }
}

// 5-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// Builds the stadium-shaped reference, starting at the middle of the lower
/// straight and driving counter-clockwise.
pub fn generate_oval_reference(
    geometry: &OvalConfig,
    speed: &SpeedConfig,
) -> Result<ReferenceTrajectory, VehicleError> {
    let g = geometry;
    let positive = [
        g.straight_length,
        g.radius,
        g.spacing,
        speed.v_max,
        speed.a_lat_max,
        speed.a_long_max,
    ];
    if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !(g.transition_length >= 0.0) {
        return Err(VehicleError::InvalidConfig(format!(
            "oval and speed settings must be positive: {g:?}, {speed:?}"
        )));
    }
    if g.transition_length >= g.straight_length.min(PI * g.radius) {
        return Err(VehicleError::InvalidConfig(format!(
            "transition length {} does not fit between the arcs",
            g.transition_length
        )));
    }
    let length = 2.0 * g.straight_length + 2.0 * PI * g.radius;
    let n = (length / g.spacing).ceil() as usize;
    let h = length / n as f64;
    let profile = if g.transition_length > 0.0 {
        OvalProfile::new(g)
    } else {
        // A zero-length transition is a step; keep it representable.
        OvalProfile::new(&OvalConfig {
            transition_length: 1e-9,
            ..*g
        })
    };

    let mut waypoints = Vec::with_capacity(n);
    let (mut x, mut y) = (0.0, 0.0);
    for i in 0..n {
        let s = i as f64 * h;
        let kappa = profile.kappa(s);
        waypoints.push(Waypoint {
            s,
            x,
            y,
            psi: profile.heading(s),
            kappa,
            dkappa: profile.dkappa(s),
            v: if kappa.abs() > 0.0 {
                speed.v_max.min((speed.a_lat_max / kappa.abs()).sqrt())
            } else {
                speed.v_max
            },
        });
        for (node, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let psi = profile.heading(s + 0.5 * h * (1.0 + node));
            x += 0.5 * h * w * psi.cos();
            y += 0.5 * h * w * psi.sin();
        }
    }

    // Acceleration-limited speed profile: forward then backward passes,
    // twice around so the seam is consistent.
    let a2 = 2.0 * speed.a_long_max * h;
    for _ in 0..2 {
        for i in 0..n {
            let prev = waypoints[(i + n - 1) % n].v;
            waypoints[i].v = waypoints[i].v.min((prev * prev + a2).sqrt());
        }
        for i in (0..n).rev() {
            let next = waypoints[(i + 1) % n].v;
            waypoints[i].v = waypoints[i].v.min((next * next + a2).sqrt());
        }
    }
    let dv = (0..n)
        .map(|i| (waypoints[(i + 1) % n].v - waypoints[(i + n - 1) % n].v) / (2.0 * h))
        .collect();
    Ok(ReferenceTrajectory {
        waypoints,
        dv,
        length,
    })
}

// Quintic Hermite basis and its first two derivatives.
fn quintic_basis(u: f64) -> [[f64; 6]; 3] {
    let u2 = u * u;
    let u3 = u2 * u;
    let u4 = u3 * u;
    let u5 = u4 * u;
    [
        [
            1.0 - 10.0 * u3 + 15.0 * u4 - 6.0 * u5,
            u - 6.0 * u3 + 8.0 * u4 - 3.0 * u5,
            0.5 * (u2 - 3.0 * u3 + 3.0 * u4 - u5),
            0.5 * (u3 - 2.0 * u4 + u5),
            -4.0 * u3 + 7.0 * u4 - 3.0 * u5,
            10.0 * u3 - 15.0 * u4 + 6.0 * u5,
        ],
        [
            -30.0 * u2 + 60.0 * u3 - 30.0 * u4,
            1.0 - 18.0 * u2 + 32.0 * u3 - 15.0 * u4,
            0.5 * (2.0 * u - 9.0 * u2 + 12.0 * u3 - 5.0 * u4),
            0.5 * (3.0 * u2 - 8.0 * u3 + 5.0 * u4),
            -12.0 * u2 + 28.0 * u3 - 15.0 * u4,
            30.0 * u2 - 60.0 * u3 + 30.0 * u4,
        ],
        [
            -60.0 * u + 180.0 * u2 - 120.0 * u3,
            -36.0 * u + 96.0 * u2 - 60.0 * u3,
            0.5 * (2.0 - 18.0 * u + 36.0 * u2 - 20.0 * u3),
            0.5 * (6.0 * u - 24.0 * u2 + 20.0 * u3),
            -24.0 * u + 84.0 * u2 - 60.0 * u3,
            60.0 * u - 180.0 * u2 + 120.0 * u3,
        ],
    ]
}

fn cubic_hermite(u: f64, h: f64, y0: f64, d0: f64, y1: f64, d1: f64) -> f64 {
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * y0
        + (u3 - 2.0 * u2 + u) * h * d0
        + (-2.0 * u3 + 3.0 * u2) * y1
        + (u3 - u2) * h * d1
}

const MAX_MATCH_ITERS: usize = 64;

impl ReferenceTrajectory {
    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn is_closed(&self) -> bool {
        true
    }

    fn segment_length(&self) -> f64 {
        self.length / self.waypoints.len() as f64
    }

    fn endpoints(&self, i: usize) -> (&Waypoint, &Waypoint) {
        let n = self.waypoints.len();
        (&self.waypoints[i], &self.waypoints[(i + 1) % n])
    }

    /// Position, first and second derivative with respect to `u` on segment `i`.
    fn curve(&self, i: usize, u: f64) -> [[f64; 2]; 3] {
        let h = self.segment_length();
        let (a, b) = self.endpoints(i);
        // The closing segment ends at the start point; headings are unwrapped
        // so cos/sin handle the 2 pi jump.
        let (sa, ca) = a.psi.sin_cos();
        let (sb, cb) = b.psi.sin_cos();
        let coeff = [
            [a.x, a.y],
            [h * ca, h * sa],
            [-h * h * a.kappa * sa, h * h * a.kappa * ca],
            [-h * h * b.kappa * sb, h * h * b.kappa * cb],
            [h * cb, h * sb],
            [b.x, b.y],
        ];
        let basis = quintic_basis(u);
        let mut out = [[0.0; 2]; 3];
        for (o, bk) in out.iter_mut().zip(basis.iter()) {
            for (c, w) in coeff.iter().zip(bk) {
                o[0] += w * c[0];
                o[1] += w * c[1];
            }
        }
        out
    }

    /// Reference fields at segment `i`, fraction `u`, relative to `(x, y, psi)`.
    fn evaluate(&self, i: usize, u: f64, x: f64, y: f64, psi: f64) -> MatchResult {
        let h = self.segment_length();
        let [p, d, _] = self.curve(i, u);
        let norm = d[0].hypot(d[1]);
        let (tx, ty) = (d[0] / norm, d[1] / norm);
        let (dx, dy) = (x - p[0], y - p[1]);
        let (sp, cp) = psi.sin_cos();
        let (a, b) = self.endpoints(i);
        let (dva, dvb) = (self.dv[i], self.dv[(i + 1) % self.dv.len()]);
        MatchResult {
            segment: i,
            u,
            s: a.s + u * h,
            x: p[0],
            y: p[1],
            e_y: tx * dy - ty * dx,
            e_psi: (tx * sp - ty * cp).atan2(tx * cp + ty * sp),
            kappa: cubic_hermite(u, h, a.kappa, a.dkappa, b.kappa, b.dkappa),
            v: cubic_hermite(u, h, a.v, dva, b.v, dvb),
        }
    }

    /// Projects `(x, y)` onto the path by Newton iteration, starting from
    /// segment `start` and walking to neighbouring segments as needed.
    pub fn match_from(&self, start: usize, x: f64, y: f64, psi: f64) -> MatchResult {
        let n = self.waypoints.len();
        let mut i = start % n;
        let mut u = 0.5;
        let mut last_move = 0i8;
        for _ in 0..MAX_MATCH_ITERS {
            let [p, d, dd] = self.curve(i, u);
            let (rx, ry) = (p[0] - x, p[1] - y);
            let g = rx * d[0] + ry * d[1];
            let gp = d[0] * d[0] + d[1] * d[1] + rx * dd[0] + ry * dd[1];
            let step = if gp > 0.0 { g / gp } else { g.signum() * 0.25 };
            let next = u - step;
            if next > 1.0 {
                if last_move == -1 {
                    u = 1.0;
                    break;
                }
                i = (i + 1) % n;
                u = 0.0;
                last_move = 1;
            } else if next < 0.0 {
                if last_move == 1 {
                    u = 0.0;
                    break;
                }
                i = (i + n - 1) % n;
                u = 1.0;
                last_move = -1;
            } else {
                u = next;
                if step.abs() < 1e-13 {
                    break;
                }
            }
        }
        self.evaluate(i, u, x, y, psi)
    }

    /// Global nearest-segment search followed by local refinement.
    pub fn match_global(&self, x: f64, y: f64, psi: f64) -> MatchResult {
        let start = self
            .waypoints
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = (a.1.x - x).hypot(a.1.y - y);
                let db = (b.1.x - x).hypot(b.1.y - y);
                da.total_cmp(&db)
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.match_from(start, x, y, psi)
    }

    /// Reflection across the x axis; the mirrored track is driven clockwise.
    pub fn mirrored(&self) -> Self {
        let waypoints = self
            .waypoints
            .iter()
            .map(|w| Waypoint {
                y: -w.y,
                psi: -w.psi,
                kappa: -w.kappa,
                dkappa: -w.dkappa,
                ..*w
            })
            .collect();
        Self {
            waypoints,
            dv: self.dv.clone(),
            length: self.length,
        }
    }

    /// Gap between the end of the closing segment and the first waypoint.
    pub fn seam_gap(&self) -> (f64, f64) {
        let n = self.waypoints.len();
        let last = &self.waypoints[n - 1];
        let first = &self.waypoints[0];
        let h = self.segment_length();
        let profile_end = last.psi + 0.5 * h * (last.kappa + first.kappa);
        let heading_gap = (profile_end - (first.psi + 2.0 * PI * self.winding())).abs();
        let [p, ..] = self.curve(n - 1, 1.0);
        ((p[0] - first.x).hypot(p[1] - first.y), heading_gap)
    }

    fn winding(&self) -> f64 {
        let n = self.waypoints.len();
        (self.waypoints[n - 1].psi - self.waypoints[0].psi).signum()
    }
}

/// Convenience wrapper around a fresh global search.
pub fn match_reference(traj: &ReferenceTrajectory, x: f64, y: f64, psi: f64) -> MatchResult {
    traj.match_global(x, y, psi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oval() -> ReferenceTrajectory {
        generate_oval_reference(&OvalConfig::default(), &SpeedConfig::default()).unwrap()
    }

    #[test]
    fn blend_integral_is_antiderivative() {
        for k in 0..=20 {
            let u = -0.2 + 1.4 * k as f64 / 20.0;
            let h = 1e-6;
            let fd = (blend_integral(u + h) - blend_integral(u - h)) / (2.0 * h);
            assert!((fd - blend(u)).abs() < 1e-8);
        }
    }

    #[test]
    fn arc_length_is_exact() {
        let t = oval();
        assert!((t.length() - (300.0 + 60.0 * PI)).abs() < 1e-9);
        assert!(t.segment_length() <= 0.5);
    }

    #[test]
    fn seam_closes() {
        let (gap, heading) = oval().seam_gap();
        assert!(gap < 1e-6, "{gap}");
        assert!(heading < 1e-9, "{heading}");
    }

    #[test]
    fn straights_and_arcs_have_plain_curvature() {
        let t = oval();
        let w0 = &t.waypoints()[0];
        assert_eq!(w0.kappa, 0.0);
        assert_eq!(w0.v, 20.0);
        let mid_arc = 75.0 + 15.0 * PI;
        let w = t
            .waypoints()
            .iter()
            .min_by(|a, b| (a.s - mid_arc).abs().total_cmp(&(b.s - mid_arc).abs()))
            .unwrap();
        assert_eq!(w.kappa, 1.0 / 30.0);
        assert!((w.v - 210f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn on_path_point_has_zero_error() {
        let t = oval();
        let w = t.waypoints()[37];
        let m = t.match_from(30, w.x, w.y, w.psi);
        assert!(m.e_y.abs() < 1e-9);
        assert!(m.e_psi.abs() < 1e-9);
    }

    #[test]
    fn offset_left_is_positive() {
        let t = oval();
        let m = t.match_from(0, 10.0, 1.0, 0.0);
        assert!((m.e_y - 1.0).abs() < 1e-9);
        let m = t.match_from(0, 10.0, -1.0, 0.0);
        assert!((m.e_y + 1.0).abs() < 1e-9);
    }

    #[test]
    fn speed_respects_acceleration_limit() {
        let t = oval();
        let h = t.segment_length();
        let w = t.waypoints();
        for i in 0..w.len() {
            let j = (i + 1) % w.len();
            assert!((w[j].v.powi(2) - w[i].v.powi(2)).abs() <= 2.0 * 3.0 * h + 1e-9);
        }
    }
}
