use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{CovarianceFunction, Dataset, GpError, GpPosterior, KernelHyperparams};

/// Jitter multipliers (relative to the mean Gram diagonal) tried in order
/// when the plain factorization fails.
pub const JITTER_LEVELS: [f64; 7] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Cholesky factorization with bounded jitter escalation. Returns the factor
/// and the absolute jitter that was added (0 when none was needed).
pub(crate) fn factorize(mut gram: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    let m = gram.nrows();
    if let Some(c) = Cholesky::new(gram.clone()) {
        return Ok((c, 0.0));
    }
    let mean_diag = (0..m).map(|i| gram[(i, i)]).sum::<f64>() / m as f64;
    let scale = if mean_diag.is_finite() && mean_diag > 0.0 {
        mean_diag
    } else {
        1.0
    };
    let mut attempted = vec![0.0];
    let mut applied = 0.0;
    for level in JITTER_LEVELS {
        let jitter = level * scale;
        for i in 0..m {
            gram[(i, i)] += jitter - applied;
        }
        applied = jitter;
        attempted.push(jitter);
        if let Some(c) = Cholesky::new(gram.clone()) {
            return Ok((c, jitter));
        }
    }
    Err(GpError::NotPositiveDefinite { attempted })
}

fn gram_matrix<K: CovarianceFunction>(
    kernel: &K,
    inputs: &[f64],
    dim: usize,
    noise: &[f64],
) -> DMatrix<f64> {
    let m = noise.len();
    let mut gram = DMatrix::zeros(m, m);
    for i in 0..m {
        let xi = &inputs[i * dim..(i + 1) * dim];
        for j in 0..=i {
            let k = kernel.eval(xi, &inputs[j * dim..(j + 1) * dim]);
            gram[(i, j)] = k;
            gram[(j, i)] = k;
        }
        gram[(i, i)] += noise[i];
    }
    gram
}

/// Conditioned Gaussian process with a cached Cholesky factor.
///
/// Inputs are stored row-major; `noise` holds one observation-noise variance
/// per training point so the multi-fidelity models can give each level its
/// own noise.
#[derive(Debug, Clone)]
pub struct Posterior<K: CovarianceFunction> {
    kernel: K,
    dim: usize,
    inputs: Vec<f64>,
    noise: Vec<f64>,
    factor: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    prior_mean: f64,
    jitter: f64,
}

impl<K: CovarianceFunction> Posterior<K> {
    /// Conditions the prior on `targets`. An empty training set yields the
    /// prior itself.
    pub fn fit(
        kernel: K,
        inputs: Vec<f64>,
        targets: &[f64],
        noise: Vec<f64>,
        prior_mean: f64,
    ) -> Result<Self, GpError> {
        let dim = kernel.input_dim();
        let m = targets.len();
        if inputs.len() != m * dim {
            return Err(GpError::DimensionMismatch {
                expected: m * dim,
                found: inputs.len(),
            });
        }
        if noise.len() != m {
            return Err(GpError::DimensionMismatch {
                expected: m,
                found: noise.len(),
            });
        }
        if m == 0 {
            return Ok(Self {
                kernel,
                dim,
                inputs,
                noise,
                factor: None,
                alpha: DVector::zeros(0),
                prior_mean,
                jitter: 0.0,
            });
        }
        let gram = gram_matrix(&kernel, &inputs, dim, &noise);
        let (factor, jitter) = factorize(gram)?;
        let resid = DVector::from_iterator(m, targets.iter().map(|y| y - prior_mean));
        let alpha = factor.solve(&resid);
        Ok(Self {
            kernel,
            dim,
            inputs,
            noise,
            factor: Some(factor),
            alpha,
            prior_mean,
            jitter,
        })
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.noise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noise.is_empty()
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    /// Absolute diagonal jitter that was needed to factorize the Gram matrix.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    /// Lower-triangular Cholesky factor of `K + diag(noise)`.
    pub fn cholesky_factor(&self) -> Option<DMatrix<f64>> {
        self.factor.as_ref().map(|f| f.l())
    }

    /// Prior cross-covariances `k(X, x)`.
    pub fn cross_covariance(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            (0..self.len()).map(|i| self.kernel.eval(self.input(i), x)),
        )
    }

    /// `L^{-1} k(X, x)`, the whitened cross-covariance.
    pub fn whitened(&self, x: &[f64]) -> DVector<f64> {
        let mut v = self.cross_covariance(x);
        if let Some(f) = &self.factor {
            f.l_dirty().solve_lower_triangular_mut(&mut v);
        }
        v
    }

    /// Posterior mean and variance; the variance is clamped at zero.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (mean, var, _) = self.predict_whitened(x);
        (mean, var)
    }

    /// Like [`Posterior::predict`] but also returns `L^{-1} k(X, x)`.
    pub fn predict_whitened(&self, x: &[f64]) -> (f64, f64, DVector<f64>) {
        debug_assert_eq!(x.len(), self.dim);
        let prior_var = self.kernel.eval(x, x);
        let Some(f) = &self.factor else {
            return (self.prior_mean, prior_var, DVector::zeros(0));
        };
        let mut v = self.cross_covariance(x);
        let mean = self.prior_mean + v.dot(&self.alpha);
        f.l_dirty().solve_lower_triangular_mut(&mut v);
        let var = (prior_var - v.norm_squared()).max(0.0);
        (mean, var, v)
    }

    /// Checked prediction that rejects inputs of the wrong dimension.
    pub fn try_predict(&self, x: &[f64]) -> Result<(f64, f64), GpError> {
        if x.len() != self.dim {
            return Err(GpError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(self.predict(x))
    }

    /// Posterior covariance between the latent values at `a` and `b`.
    pub fn posterior_covariance(&self, a: &[f64], b: &[f64]) -> f64 {
        let prior = self.kernel.eval(a, b);
        if self.factor.is_none() {
            return prior;
        }
        prior - self.whitened(a).dot(&self.whitened(b))
    }
}

impl GpPosterior {
    pub fn hyperparams(&self) -> KernelHyperparams {
        KernelHyperparams::new(
            self.kernel.lengthscales.clone(),
            self.kernel.variance,
            self.noise.first().copied().unwrap_or(0.0),
        )
    }
}

/// Fits a Matérn-5/2 posterior on the dataset's targets as stored.
pub fn fit_posterior(
    data: &Dataset,
    hp: &KernelHyperparams,
    prior_mean: f64,
) -> Result<GpPosterior, GpError> {
    if hp.dim() != data.dim() {
        return Err(GpError::DimensionMismatch {
            expected: data.dim(),
            found: hp.dim(),
        });
    }
    hp.validate()?;
    Posterior::fit(
        hp.kernel(),
        data.flat_inputs(),
        data.targets(),
        vec![hp.noise_variance; data.len()],
        prior_mean,
    )
}

/// Log marginal likelihood and its gradient.
///
/// Returns the value, `dL/dp` for each kernel parameter, and `dL/dn_i` for
/// each point's noise variance (callers aggregate those per noise group).
pub(crate) fn lml_with_gradient<K: CovarianceFunction>(
    kernel: &K,
    inputs: &[f64],
    targets: &[f64],
    noise: &[f64],
    prior_mean: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>), GpError> {
    let dim = kernel.input_dim();
    let m = targets.len();
    let np = kernel.num_params();
    let mut gram = DMatrix::zeros(m, m);
    let mut dk = vec![0.0; m * (m + 1) / 2 * np];
    let mut idx = 0;
    for i in 0..m {
        let xi = &inputs[i * dim..(i + 1) * dim];
        for j in 0..=i {
            let k = kernel.eval_with_grad(
                xi,
                &inputs[j * dim..(j + 1) * dim],
                &mut dk[idx * np..(idx + 1) * np],
            );
            gram[(i, j)] = k;
            gram[(j, i)] = k;
            idx += 1;
        }
        gram[(i, i)] += noise[i];
    }
    let (factor, _) = factorize(gram)?;
    let resid = DVector::from_iterator(m, targets.iter().map(|y| y - prior_mean));
    let alpha = factor.solve(&resid);
    let log_det_half: f64 = factor.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let value = -0.5 * resid.dot(&alpha)
        - log_det_half
        - 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln();

    // dL/dp = 1/2 tr((alpha alpha^T - K^-1) dK/dp)
    let kinv = factor.inverse();
    let mut grad = vec![0.0; np];
    let mut noise_grad = vec![0.0; m];
    idx = 0;
    for i in 0..m {
        for j in 0..=i {
            let w = alpha[i] * alpha[j] - kinv[(i, j)];
            let factor = if i == j { 0.5 * w } else { w };
            let row = &dk[idx * np..(idx + 1) * np];
            for (g, d) in grad.iter_mut().zip(row) {
                *g += factor * d;
            }
            if i == j {
                noise_grad[i] = 0.5 * w;
            }
            idx += 1;
        }
    }
    Ok((value, grad, noise_grad))
}
