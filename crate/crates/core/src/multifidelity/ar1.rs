use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fit_low_level, standardized, MultiFidelityDataset};
use crate::gp::{
    fit_posterior, lml_with_gradient, log_uniform, multistart, CovarianceFunction, GpError,
    HyperPriorConfig, KernelHyperparams, MapObjective, Matern52, Posterior, Standardization,
};
use crate::optim::Bounds;

/// Level indicator stored in the extra input coordinate.
const LOW: f64 = 0.0;
const HIGH: f64 = 1.0;

/// Covariance of the stacked AR1 process over inputs `(x, level)`.
///
/// `Cov(g1(x), g1(x')) = k1`, `Cov(g2(x), g1(x')) = rho k1`,
/// `Cov(g2(x), g2(x')) = rho^2 k1 + k2`. Gradient parameters are the low
/// kernel's, then the bias kernel's, then `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ar1Kernel {
    pub low: Matern52,
    pub bias: Matern52,
    pub rho: f64,
}

impl Ar1Kernel {
    fn dim(&self) -> usize {
        self.low.lengthscales.len()
    }

    /// Covariance between level `la` at `a` and level `lb` at `b`
    /// (levels are 1 or 2).
    pub fn level_covariance(&self, la: u8, a: &[f64], lb: u8, b: &[f64]) -> f64 {
        let mut xa = a.to_vec();
        xa.push(if la == 2 { HIGH } else { LOW });
        let mut xb = b.to_vec();
        xb.push(if lb == 2 { HIGH } else { LOW });
        self.eval(&xa, &xb)
    }
}

impl CovarianceFunction for Ar1Kernel {
    fn input_dim(&self) -> usize {
        self.dim() + 1
    }

    fn num_params(&self) -> usize {
        2 * (self.dim() + 1) + 1
    }

    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d = self.dim();
        let highs = (a[d] > 0.5) as i32 + (b[d] > 0.5) as i32;
        let k1 = self.low.eval(&a[..d], &b[..d]);
        let mut v = self.rho.powi(highs) * k1;
        if highs == 2 {
            v += self.bias.eval(&a[..d], &b[..d]);
        }
        v
    }

    fn eval_with_grad(&self, a: &[f64], b: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.dim();
        let highs = (a[d] > 0.5) as i32 + (b[d] > 0.5) as i32;
        let (g_low, rest) = grad.split_at_mut(d + 1);
        let (g_bias, g_rho) = rest.split_at_mut(d + 1);
        let k1 = self.low.eval_with_grad(&a[..d], &b[..d], g_low);
        let factor = self.rho.powi(highs);
        for g in g_low.iter_mut() {
            *g *= factor;
        }
        let mut v = factor * k1;
        if highs == 2 {
            v += self.bias.eval_with_grad(&a[..d], &b[..d], g_bias);
        } else {
            g_bias.fill(0.0);
        }
        g_rho[0] = match highs {
            0 => 0.0,
            1 => k1,
            _ => 2.0 * self.rho * k1,
        };
        v
    }
}

/// Hyperparameters of the two-level AR1 model (standardized target units).
/// `bias.noise_variance` is the high level's observation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ar1Hyperparams {
    pub low: KernelHyperparams,
    pub bias: KernelHyperparams,
    pub rho: f64,
}

impl Ar1Hyperparams {
    pub fn kernel(&self) -> Ar1Kernel {
        Ar1Kernel {
            low: self.low.kernel(),
            bias: self.bias.kernel(),
            rho: self.rho,
        }
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = self.low.to_log_vec();
        v.extend(self.bias.to_log_vec());
        v.push(self.rho);
        v
    }

    fn from_vec(v: &[f64], dim: usize) -> Self {
        let n = dim + 2;
        Self {
            low: KernelHyperparams::from_log_vec(&v[..n]),
            bias: KernelHyperparams::from_log_vec(&v[n..2 * n]),
            rho: v[2 * n],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ar1FitOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Below this many high-fidelity points, `rho` and the bias kernel stay
    /// at their initialization and only the low level is fitted.
    pub min_high_for_bias_fit: usize,
    pub bias_lengthscale: f64,
    pub bias_signal_variance: f64,
    pub rho_bounds: [f64; 2],
    /// Also place the lengthscale prior on the bias kernel.
    pub bias_prior: bool,
    /// Low-level hyperparameters fitted beforehand; skips the low-only fit.
    #[serde(skip)]
    pub low_hyperparams: Option<KernelHyperparams>,
    /// Previous joint optimum, tried as the first start.
    #[serde(skip)]
    pub warm_start: Option<Ar1Hyperparams>,
}

impl Default for Ar1FitOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            seed: 0,
            min_high_for_bias_fit: 3,
            bias_lengthscale: 0.5,
            bias_signal_variance: 0.05,
            rho_bounds: [-10.0, 10.0],
            bias_prior: false,
            low_hyperparams: None,
            warm_start: None,
        }
    }
}

/// Fitted two-level AR1 co-kriging model.
#[derive(Debug, Clone)]
pub struct Ar1Model {
    hyper: Ar1Hyperparams,
    standardization: Standardization,
    posterior: Posterior<Ar1Kernel>,
    dim: usize,
    n_low: usize,
    n_high: usize,
    objective: Option<f64>,
}

impl Ar1Model {
    /// Conditions the stacked Gaussian on both levels with fixed
    /// hyperparameters.
    pub fn with_hyperparams(
        data: &MultiFidelityDataset,
        hyper: Ar1Hyperparams,
    ) -> Result<Self, GpError> {
        let dim = data.dim();
        if hyper.low.dim() != dim || hyper.bias.dim() != dim {
            return Err(GpError::DimensionMismatch {
                expected: dim,
                found: hyper.low.dim(),
            });
        }
        hyper.low.validate()?;
        hyper.bias.validate()?;
        if !hyper.rho.is_finite() {
            return Err(GpError::InvalidHyperparams(format!("rho = {}", hyper.rho)));
        }
        let std = data.standardization();
        let (inputs, targets, noise) = stack(data, &std, &hyper);
        let posterior = Posterior::fit(hyper.kernel(), inputs, &targets, noise, 0.0)?;
        Ok(Self {
            hyper,
            standardization: std,
            posterior,
            dim,
            n_low: data.low().len(),
            n_high: data.high().len(),
            objective: None,
        })
    }

    pub fn hyperparams(&self) -> &Ar1Hyperparams {
        &self.hyper
    }

    pub fn rho(&self) -> f64 {
        self.hyper.rho
    }

    pub fn standardization(&self) -> Standardization {
        self.standardization
    }

    pub fn objective(&self) -> Option<f64> {
        self.objective
    }

    pub fn counts(&self) -> (usize, usize) {
        (self.n_low, self.n_high)
    }

    pub fn posterior(&self) -> &Posterior<Ar1Kernel> {
        &self.posterior
    }

    fn level_input(&self, x: &[f64], level: f64) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        let mut z = x.to_vec();
        z.push(level);
        z
    }

    /// High-level mean and variance in standardized units.
    pub fn predict_standardized(&self, x: &[f64]) -> (f64, f64) {
        self.posterior.predict(&self.level_input(x, HIGH))
    }

    /// Low-level mean and variance in standardized units.
    pub fn predict_low_standardized(&self, x: &[f64]) -> (f64, f64) {
        self.posterior.predict(&self.level_input(x, LOW))
    }

    /// High-fidelity predictive mean and variance in original units.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (m, v) = self.predict_standardized(x);
        (
            self.standardization.invert(m),
            self.standardization.invert_variance(v),
        )
    }
}

fn stack(
    data: &MultiFidelityDataset,
    std: &Standardization,
    hyper: &Ar1Hyperparams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let d = data.dim();
    let m = data.low().len() + data.high().len();
    let mut inputs = Vec::with_capacity(m * (d + 1));
    let mut targets = Vec::with_capacity(m);
    let mut noise = Vec::with_capacity(m);
    for (level, ds, n) in [
        (LOW, data.low(), hyper.low.noise_variance),
        (HIGH, data.high(), hyper.bias.noise_variance),
    ] {
        for (x, &y) in ds.inputs().iter().zip(ds.targets()) {
            inputs.extend_from_slice(x);
            inputs.push(level);
            targets.push(std.apply(y));
            noise.push(n);
        }
    }
    (inputs, targets, noise)
}

/// Joint MAP problem over `[low log-hp, bias log-hp, rho]`.
struct Ar1Map<'a> {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    is_high: Vec<bool>,
    priors: &'a HyperPriorConfig,
    bounds: Bounds,
    dim: usize,
    low_init: Vec<f64>,
    rho_init: f64,
    bias_prior: bool,
}

impl MapObjective for Ar1Map<'_> {
    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn initial_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut v = self.low_init.clone();
        for _ in 0..self.dim {
            v.push(log_uniform(rng, self.priors.lengthscale_init));
        }
        v.push(log_uniform(rng, self.priors.signal_init));
        v.push(log_uniform(rng, self.priors.effective_noise_init()));
        v.push(self.rho_init);
        v
    }

    fn evaluate(&self, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        let d = self.dim;
        let hyper = Ar1Hyperparams::from_vec(theta, d);
        let kernel = hyper.kernel();
        let noise: Vec<f64> = self
            .is_high
            .iter()
            .map(|&h| {
                if h {
                    hyper.bias.noise_variance
                } else {
                    hyper.low.noise_variance
                }
            })
            .collect();
        let (lml, kgrad, ngrad) =
            lml_with_gradient(&kernel, &self.inputs, &self.targets, &noise, 0.0).ok()?;
        let (mut n_low, mut n_high) = (0.0, 0.0);
        for (g, &h) in ngrad.iter().zip(&self.is_high) {
            if h {
                n_high += g;
            } else {
                n_low += g;
            }
        }
        // kernel order: low (d+1), bias (d+1), rho; theta adds a noise slot after each kernel.
        let mut grad = Vec::with_capacity(theta.len());
        grad.extend_from_slice(&kgrad[..d + 1]);
        grad.push(hyper.low.noise_variance * n_low);
        grad.extend_from_slice(&kgrad[d + 1..2 * d + 2]);
        grad.push(hyper.bias.noise_variance * n_high);
        grad.push(kgrad[2 * d + 2]);
        let mut lp = self
            .priors
            .lengthscale_log_prior(&hyper.low.lengthscales, &mut grad[..d]);
        if self.bias_prior {
            lp += self
                .priors
                .lengthscale_log_prior(&hyper.bias.lengthscales, &mut grad[d + 2..2 * d + 2]);
        }
        Some((lml + lp, grad))
    }
}

/// Fits an AR1 model with default options and the given restarts/seed.
pub fn fit_ar1(
    data: &MultiFidelityDataset,
    priors: &HyperPriorConfig,
    restarts: usize,
    seed: u64,
) -> Result<Ar1Model, GpError> {
    fit_ar1_with(
        data,
        priors,
        &Ar1FitOptions {
            restarts,
            seed,
            ..Default::default()
        },
    )
}

pub fn fit_ar1_with(
    data: &MultiFidelityDataset,
    priors: &HyperPriorConfig,
    opts: &Ar1FitOptions,
) -> Result<Ar1Model, GpError> {
    if !data.low().is_frozen() {
        return Err(GpError::InvalidInput(
            "low-fidelity data must be frozen".into(),
        ));
    }
    if data.low().len() < 2 {
        return Err(GpError::InsufficientData {
            needed: 2,
            found: data.low().len(),
        });
    }
    priors.validate()?;
    let d = data.dim();
    let std = data.standardization();
    let low_hp = match &opts.low_hyperparams {
        Some(hp) => hp.clone(),
        None => fit_low_level(data.low(), &std, priors, opts.restarts, opts.seed, None)?,
    };
    let m2 = data.high().len();
    let rho_init = initial_rho(data, &std, &low_hp)?;
    let nb = priors.effective_noise_bounds();
    let bias_default = KernelHyperparams::isotropic(
        d,
        opts.bias_lengthscale,
        opts.bias_signal_variance,
        low_hp.noise_variance.clamp(nb[0], nb[1]),
    );

    if m2 == 0 {
        // No high data: the joint objective reduces to the low-level one.
        let hyper = Ar1Hyperparams {
            low: low_hp,
            bias: bias_default,
            rho: rho_init,
        };
        return Ar1Model::with_hyperparams(data, hyper);
    }

    let fit_bias = m2 >= opts.min_high_for_bias_fit;
    let n = d + 2;
    let mut lower = Vec::with_capacity(2 * n + 1);
    let mut upper = Vec::with_capacity(2 * n + 1);
    for _ in 0..2 {
        lower.extend(std::iter::repeat_n(priors.lengthscale_bounds[0].ln(), d));
        upper.extend(std::iter::repeat_n(priors.lengthscale_bounds[1].ln(), d));
        lower.push(priors.signal_bounds[0].ln());
        upper.push(priors.signal_bounds[1].ln());
        lower.push(nb[0].ln());
        upper.push(nb[1].ln());
    }
    lower.push(opts.rho_bounds[0]);
    upper.push(opts.rho_bounds[1]);
    let rho_init = rho_init.clamp(opts.rho_bounds[0], opts.rho_bounds[1]);
    let mut default_theta = low_hp.to_log_vec();
    default_theta.extend(bias_default.to_log_vec());
    default_theta.push(rho_init);
    if !fit_bias {
        for i in n..2 * n + 1 {
            lower[i] = default_theta[i];
            upper[i] = default_theta[i];
        }
    }

    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut is_high = Vec::new();
    for (high, ds) in [(false, data.low()), (true, data.high())] {
        for (x, &y) in ds.inputs().iter().zip(ds.targets()) {
            inputs.extend_from_slice(x);
            inputs.push(if high { HIGH } else { LOW });
            targets.push(std.apply(y));
            is_high.push(high);
        }
    }
    let model = Ar1Map {
        inputs,
        targets,
        is_high,
        priors,
        bounds: Bounds::new(lower, upper),
        dim: d,
        low_init: low_hp.to_log_vec(),
        rho_init,
        bias_prior: opts.bias_prior,
    };
    let mut warm = Vec::new();
    if let Some(w) = opts
        .warm_start
        .as_ref()
        .filter(|w| w.low.dim() == d && fit_bias)
    {
        warm.push(w.to_vec());
    }
    warm.push(default_theta);
    let restarts = if fit_bias { opts.restarts } else { 0 };
    let (theta, objective, _) = multistart(&model, restarts, opts.seed, warm, priors.max_iters)?;
    let mut hyper = Ar1Hyperparams::from_vec(&theta, d);
    priors.clamp(&mut hyper.low);
    if fit_bias {
        priors.clamp(&mut hyper.bias);
    }
    let mut fitted = Ar1Model::with_hyperparams(data, hyper)?;
    fitted.objective = Some(objective);
    Ok(fitted)
}

/// Least-squares slope (through the origin) of standardized high targets on
/// the low-level posterior mean; 1 when fewer than two high points exist.
fn initial_rho(
    data: &MultiFidelityDataset,
    std: &Standardization,
    low_hp: &KernelHyperparams,
) -> Result<f64, GpError> {
    if data.high().len() < 2 {
        return Ok(1.0);
    }
    let low = fit_posterior(&standardized(data.low(), std)?, low_hp, 0.0)?;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, &y) in data.high().inputs().iter().zip(data.high().targets()) {
        let m = low.predict(x).0;
        sxy += m * std.apply(y);
        sxx += m * m;
    }
    Ok(if sxx > 1e-12 { sxy / sxx } else { 1.0 })
}
