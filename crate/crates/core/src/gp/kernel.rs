use serde::{Deserialize, Serialize};

use super::GpError;

const SQRT5: f64 = 2.236_067_977_499_79;

/// A stationary or structured covariance function with a differentiable
/// parameterization.
///
/// `eval_with_grad` writes `dk/dp` for each of the kernel's own parameters
/// (log lengthscales, log variances, raw scale factors, as the kernel
/// defines them) into `grad` and returns `k(a, b)`.
pub trait CovarianceFunction: Clone + Send + Sync + std::fmt::Debug {
    fn input_dim(&self) -> usize;
    fn num_params(&self) -> usize;
    fn eval(&self, a: &[f64], b: &[f64]) -> f64;
    fn eval_with_grad(&self, a: &[f64], b: &[f64], grad: &mut [f64]) -> f64;
}

/// `(1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r)`, the unit-variance Matérn-5/2 profile.
pub fn matern52_profile(r: f64) -> f64 {
    let sr = SQRT5 * r;
    (1.0 + sr + sr * sr / 3.0) * (-sr).exp()
}

/// Matérn-5/2 kernel with one lengthscale per input dimension.
///
/// Gradient parameters are `[log l_1, .., log l_d, log variance]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matern52 {
    pub lengthscales: Vec<f64>,
    pub variance: f64,
}

impl Matern52 {
    pub fn new(lengthscales: Vec<f64>, variance: f64) -> Self {
        Self {
            lengthscales,
            variance,
        }
    }

    pub fn from_log_params(p: &[f64]) -> Self {
        let d = p.len() - 1;
        Self {
            lengthscales: p[..d].iter().map(|v| v.exp()).collect(),
            variance: p[d].exp(),
        }
    }

    pub fn log_params(&self) -> Vec<f64> {
        self.lengthscales
            .iter()
            .map(|l| l.ln())
            .chain(std::iter::once(self.variance.ln()))
            .collect()
    }

    #[inline]
    fn scaled_sq_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let t = (x - y) / l;
                t * t
            })
            .sum()
    }
}

impl CovarianceFunction for Matern52 {
    fn input_dim(&self) -> usize {
        self.lengthscales.len()
    }

    fn num_params(&self) -> usize {
        self.lengthscales.len() + 1
    }

    #[inline]
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.variance * matern52_profile(self.scaled_sq_dist(a, b).sqrt())
    }

    fn eval_with_grad(&self, a: &[f64], b: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.lengthscales.len();
        let r = self.scaled_sq_dist(a, b).sqrt();
        let sr = SQRT5 * r;
        let e = (-sr).exp();
        let k = self.variance * (1.0 + sr + sr * sr / 3.0) * e;
        // dk/dlog(l_j) = s e (5/3)(1 + sqrt5 r) ((a_j - b_j)/l_j)^2
        let c = self.variance * e * (5.0 / 3.0) * (1.0 + sr);
        for j in 0..d {
            let t = (a[j] - b[j]) / self.lengthscales[j];
            grad[j] = c * t * t;
        }
        grad[d] = k;
        k
    }
}

/// Hyperparameters of a Matérn-5/2 ARD GP with Gaussian observation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelHyperparams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelHyperparams {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64, noise_variance: f64) -> Self {
        Self {
            lengthscales,
            signal_variance,
            noise_variance,
        }
    }

    /// Isotropic default: every lengthscale equal.
    pub fn isotropic(
        dim: usize,
        lengthscale: f64,
        signal_variance: f64,
        noise_variance: f64,
    ) -> Self {
        Self::new(vec![lengthscale; dim], signal_variance, noise_variance)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn kernel(&self) -> Matern52 {
        Matern52::new(self.lengthscales.clone(), self.signal_variance)
    }

    pub fn validate(&self) -> Result<(), GpError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if self.lengthscales.is_empty() {
            return Err(GpError::InvalidHyperparams("no lengthscales".into()));
        }
        if !self.lengthscales.iter().all(|&l| ok(l)) {
            return Err(GpError::InvalidHyperparams(format!(
                "lengthscales must be positive: {:?}",
                self.lengthscales
            )));
        }
        if !ok(self.signal_variance) || !ok(self.noise_variance) {
            return Err(GpError::InvalidHyperparams(format!(
                "variances must be positive: signal {}, noise {}",
                self.signal_variance, self.noise_variance
            )));
        }
        Ok(())
    }

    /// `[log l_1, .., log l_d, log signal, log noise]`.
    pub fn to_log_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_variance.ln());
        v.push(self.noise_variance.ln());
        v
    }

    pub fn from_log_vec(v: &[f64]) -> Self {
        let d = v.len() - 2;
        Self {
            lengthscales: v[..d].iter().map(|x| x.exp()).collect(),
            signal_variance: v[d].exp(),
            noise_variance: v[d + 1].exp(),
        }
    }
}

/// Matérn-5/2 ARD covariance between two points.
pub fn matern52_ard(a: &[f64], b: &[f64], hp: &KernelHyperparams) -> Result<f64, GpError> {
    if a.len() != hp.dim() {
        return Err(GpError::DimensionMismatch {
            expected: hp.dim(),
            found: a.len(),
        });
    }
    if b.len() != hp.dim() {
        return Err(GpError::DimensionMismatch {
            expected: hp.dim(),
            found: b.len(),
        });
    }
    Ok(hp.kernel().eval(a, b))
}
