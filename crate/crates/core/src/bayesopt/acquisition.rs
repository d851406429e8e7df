use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::BoError;
use crate::gp::{CovarianceFunction, GpPosterior};
use crate::lowdisc::QuasiRandom;
use crate::optim::{fd_gradient, minimize_projected, Bounds, LbfgsOptions};
use crate::par;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below `best` for a Gaussian prediction.
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> f64 {
    let gap = best - mean;
    if variance <= 0.0 {
        return gap.max(0.0);
    }
    let sigma = variance.sqrt();
    let z = gap / sigma;
    (gap * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

/// Candidate-set settings for [`maximize_acquisition`] on the unit cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchDomain {
    pub dim: usize,
    /// Number of quasi-random candidates scored.
    pub candidates: usize,
    /// How many of the best candidates are refined locally.
    pub polish: usize,
    pub polish_iters: usize,
}

impl Default for SearchDomain {
    fn default() -> Self {
        Self {
            dim: 6,
            candidates: 4096,
            polish: 5,
            polish_iters: 30,
        }
    }
}

impl SearchDomain {
    pub fn unit_cube(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::unit_cube(self.dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionMax {
    pub x: Vec<f64>,
    pub value: f64,
    /// Index of the candidate the maximum came from.
    pub candidate: usize,
    /// True when local refinement improved on the raw candidate.
    pub polished: bool,
}

/// Maximizes `acq` over the unit cube: score a seeded candidate set, refine
/// the best few with bounded quasi-Newton ascent, and keep a refined point
/// only when it is strictly better. Ties resolve to the lowest candidate
/// index.
pub fn maximize_acquisition<F>(
    acq: F,
    domain: &SearchDomain,
    seed: u64,
) -> Result<AcquisitionMax, BoError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if domain.dim == 0 || domain.candidates == 0 {
        return Err(BoError::Usage("empty search domain".into()));
    }
    let candidates = QuasiRandom::new(domain.dim, seed).points(domain.candidates);
    let scores: Vec<f64> = par::map_slice(&candidates, |x| {
        let v = acq(x);
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    });
    let best = par::argmax_first(&scores)
        .filter(|&i| scores[i].is_finite())
        .ok_or_else(|| {
            BoError::Optimization("acquisition is non-finite on every candidate".into())
        })?;

    let mut order: Vec<usize> = (0..scores.len())
        .filter(|&i| scores[i].is_finite())
        .collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(domain.polish);

    let bounds = domain.bounds();
    let opts = LbfgsOptions {
        max_iters: domain.polish_iters,
        grad_tol: 1e-9,
        f_tol: 1e-12,
        ..Default::default()
    };
    let neg = |x: &[f64]| {
        let v = acq(x);
        v.is_finite().then_some(-v)
    };
    let refined = par::map_slice(&order, |&i| {
        let objective = |x: &[f64]| {
            let v = neg(x)?;
            let g = fd_gradient(&neg, x, &bounds, 1e-6)?;
            Some((v, g))
        };
        minimize_projected(objective, &candidates[i], &bounds, &opts).map(|m| (i, m.x, -m.value))
    });

    let mut out = AcquisitionMax {
        x: candidates[best].clone(),
        value: scores[best],
        candidate: best,
        polished: false,
    };
    for (i, x, v) in refined.into_iter().flatten() {
        if v > out.value && v > scores[i] {
            out = AcquisitionMax {
                x,
                value: v,
                candidate: i,
                polished: true,
            };
        }
    }
    Ok(out)
}

/// Integrated posterior variance for a single-fidelity posterior.
///
/// Observing a candidate `c` with noise `s2` lowers the variance at a
/// quadrature point `q` by `cov(q, c)^2 / (var(c) + s2)` regardless of the
/// observed value, so no fantasy targets are needed. The acquisition is the
/// negated mean fantasized variance over the quadrature set.
pub struct IntegratedVariance<'a> {
    post: &'a GpPosterior,
    quad: Vec<Vec<f64>>,
    /// Column `j` is `L^{-1} k(X, q_j)`.
    whitened: DMatrix<f64>,
    variance: Vec<f64>,
    noise: f64,
}

impl<'a> IntegratedVariance<'a> {
    pub fn new(post: &'a GpPosterior, quad: Vec<Vec<f64>>) -> Result<Self, BoError> {
        if quad.is_empty() {
            return Err(BoError::Usage(
                "IPV needs at least one quadrature point".into(),
            ));
        }
        let m = post.len();
        let mut whitened = DMatrix::zeros(m, quad.len());
        let mut variance = Vec::with_capacity(quad.len());
        for (j, q) in quad.iter().enumerate() {
            let (_, var, v) = post.predict_whitened(q);
            if m > 0 {
                whitened.set_column(j, &v);
            }
            variance.push(var);
        }
        Ok(Self {
            post,
            quad,
            whitened,
            variance,
            noise: post.noise().first().copied().unwrap_or(0.0),
        })
    }

    /// Quadrature points drawn from a seeded low-discrepancy sequence.
    pub fn quadrature(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
        QuasiRandom::new(dim, seed).points(count)
    }

    /// Mean posterior variance over the quadrature set, before any fantasy.
    pub fn baseline(&self) -> f64 {
        self.variance.iter().sum::<f64>() / self.variance.len() as f64
    }

    pub fn evaluate(&self, candidate: &[f64]) -> f64 {
        let (_, var_c, v_c) = self.post.predict_whitened(candidate);
        let denom = var_c + self.noise;
        let kernel = self.post.kernel();
        let cross: DVector<f64> = if self.post.is_empty() {
            DVector::zeros(self.quad.len())
        } else {
            self.whitened.tr_mul(&v_c)
        };
        let mut total = 0.0;
        for (j, q) in self.quad.iter().enumerate() {
            let cov = kernel.eval(q, candidate) - cross[j];
            let reduction = if denom > 0.0 { cov * cov / denom } else { 0.0 };
            total += (self.variance[j] - reduction).max(0.0);
        }
        -total / self.quad.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ei_closed_forms() {
        assert_eq!(expected_improvement(1.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(0.0, 0.0, 1.0), 1.0);
        assert!((expected_improvement(2.0, 1.0, 2.0) - INV_SQRT_2PI).abs() < 1e-15);
    }

    #[test]
    fn cdf_symmetry() {
        for z in [-3.0, -0.5, 0.0, 1.2] {
            assert!((normal_cdf(z) + normal_cdf(-z) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_acquisition_returns_first_candidate() {
        let domain = SearchDomain {
            candidates: 64,
            ..SearchDomain::unit_cube(3)
        };
        let m = maximize_acquisition(|_| 0.25, &domain, 9).unwrap();
        assert_eq!(m.candidate, 0);
        assert_eq!(m.x, QuasiRandom::new(3, 9).point(0));
        assert!(!m.polished);
    }

    #[test]
    fn non_finite_everywhere_is_an_error() {
        let domain = SearchDomain::unit_cube(2);
        assert!(matches!(
            maximize_acquisition(|_| f64::NAN, &domain, 0),
            Err(BoError::Optimization(_))
        ));
    }

    #[test]
    fn polishing_reaches_smooth_peak() {
        let domain = SearchDomain {
            candidates: 32,
            ..SearchDomain::unit_cube(2)
        };
        let peak = [0.3137, 0.7071];
        let m = maximize_acquisition(
            |x| -((x[0] - peak[0]).powi(2) + (x[1] - peak[1]).powi(2)),
            &domain,
            1,
        )
        .unwrap();
        assert!(m.polished);
        assert!(
            (m.x[0] - peak[0]).abs() < 1e-4 && (m.x[1] - peak[1]).abs() < 1e-4,
            "{:?}",
            m.x
        );
    }
}
