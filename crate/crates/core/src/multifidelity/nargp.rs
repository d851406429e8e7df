use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fit_low_level, standardized, MultiFidelityDataset};
use crate::gp::{
    fit_posterior, lml_with_gradient, log_uniform, multistart, CovarianceFunction, GpError,
    GpPosterior, HyperPriorConfig, KernelHyperparams, MapObjective, Matern52, Posterior,
    Standardization,
};
use crate::optim::Bounds;

/// Warp kernel over augmented inputs `(x, y)` where `y` is the low-level
/// posterior mean at `x`: `k_scale(x, x') k_warp(y, y') + k_bias(x, x')`.
///
/// `k_warp` has unit variance. Gradient parameters are the scale kernel's
/// `[log l, log s]`, `log l_warp`, then the bias kernel's `[log l, log s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NargpKernel {
    pub scale: Matern52,
    pub warp: Matern52,
    pub bias: Matern52,
}

impl NargpKernel {
    fn dim(&self) -> usize {
        self.scale.lengthscales.len()
    }
}

impl CovarianceFunction for NargpKernel {
    fn input_dim(&self) -> usize {
        self.dim() + 1
    }

    fn num_params(&self) -> usize {
        2 * (self.dim() + 1) + 1
    }

    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d = self.dim();
        self.scale.eval(&a[..d], &b[..d]) * self.warp.eval(&a[d..], &b[d..])
            + self.bias.eval(&a[..d], &b[..d])
    }

    fn eval_with_grad(&self, a: &[f64], b: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.dim();
        let (g_scale, rest) = grad.split_at_mut(d + 1);
        let (g_warp, g_bias) = rest.split_at_mut(1);
        let ks = self.scale.eval_with_grad(&a[..d], &b[..d], g_scale);
        let mut wg = [0.0; 2];
        let kw = self.warp.eval_with_grad(&a[d..], &b[d..], &mut wg);
        for g in g_scale.iter_mut() {
            *g *= kw;
        }
        g_warp[0] = ks * wg[0];
        let kb = self.bias.eval_with_grad(&a[..d], &b[..d], g_bias);
        ks * kw + kb
    }
}

/// Warp-GP hyperparameters (standardized target units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NargpHyperparams {
    pub scale_lengthscales: Vec<f64>,
    pub scale_variance: f64,
    pub warp_lengthscale: f64,
    pub bias_lengthscales: Vec<f64>,
    pub bias_variance: f64,
    pub noise_variance: f64,
}

impl NargpHyperparams {
    pub fn kernel(&self) -> NargpKernel {
        NargpKernel {
            scale: Matern52::new(self.scale_lengthscales.clone(), self.scale_variance),
            warp: Matern52::new(vec![self.warp_lengthscale], 1.0),
            bias: Matern52::new(self.bias_lengthscales.clone(), self.bias_variance),
        }
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.scale_lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.scale_variance.ln());
        v.push(self.warp_lengthscale.ln());
        v.extend(self.bias_lengthscales.iter().map(|l| l.ln()));
        v.push(self.bias_variance.ln());
        v.push(self.noise_variance.ln());
        v
    }

    fn from_vec(v: &[f64], d: usize) -> Self {
        Self {
            scale_lengthscales: v[..d].iter().map(|x| x.exp()).collect(),
            scale_variance: v[d].exp(),
            warp_lengthscale: v[d + 1].exp(),
            bias_lengthscales: v[d + 2..2 * d + 2].iter().map(|x| x.exp()).collect(),
            bias_variance: v[2 * d + 2].exp(),
            noise_variance: v[2 * d + 3].exp(),
        }
    }

    fn validate(&self, d: usize) -> Result<(), GpError> {
        if self.scale_lengthscales.len() != d || self.bias_lengthscales.len() != d {
            return Err(GpError::DimensionMismatch {
                expected: d,
                found: self.scale_lengthscales.len(),
            });
        }
        let all = self.to_vec();
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(GpError::InvalidHyperparams(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NargpFitOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Below this many high-fidelity points the warp hyperparameters stay at
    /// their defaults.
    pub min_high_for_warp_fit: usize,
    pub default_lengthscale: f64,
    pub default_bias_variance: f64,
    #[serde(skip)]
    pub low_hyperparams: Option<KernelHyperparams>,
    #[serde(skip)]
    pub warm_start: Option<NargpHyperparams>,
}

impl Default for NargpFitOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            seed: 0,
            min_high_for_warp_fit: 3,
            default_lengthscale: 0.5,
            default_bias_variance: 0.05,
            low_hyperparams: None,
            warm_start: None,
        }
    }
}

/// Fitted NARGP model: low GP plus warp GP on augmented inputs.
#[derive(Debug, Clone)]
pub struct NargpModel {
    low: GpPosterior,
    warp: Posterior<NargpKernel>,
    hyper: NargpHyperparams,
    standardization: Standardization,
    dim: usize,
}

impl NargpModel {
    /// Builds the model from fixed low and warp hyperparameters.
    pub fn with_hyperparams(
        data: &MultiFidelityDataset,
        low_hp: &KernelHyperparams,
        hyper: NargpHyperparams,
    ) -> Result<Self, GpError> {
        let d = data.dim();
        hyper.validate(d)?;
        let std = data.standardization();
        let low = fit_posterior(&standardized(data.low(), &std)?, low_hp, 0.0)?;
        let (inputs, targets) = augment(&low, data, &std);
        let m = targets.len();
        let warp = Posterior::fit(
            hyper.kernel(),
            inputs,
            &targets,
            vec![hyper.noise_variance; m],
            0.0,
        )?;
        Ok(Self {
            low,
            warp,
            hyper,
            standardization: std,
            dim: d,
        })
    }

    pub fn hyperparams(&self) -> &NargpHyperparams {
        &self.hyper
    }

    pub fn low_posterior(&self) -> &GpPosterior {
        &self.low
    }

    pub fn warp_posterior(&self) -> &Posterior<NargpKernel> {
        &self.warp
    }

    pub fn standardization(&self) -> Standardization {
        self.standardization
    }

    /// Augmented warp input `(x, mean_low(x))`.
    pub fn augmented_input(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        let mut z = x.to_vec();
        z.push(self.low.predict(x).0);
        z
    }

    /// High-level mean and variance in standardized units. The low-level
    /// mean is propagated deterministically; its variance is not.
    pub fn predict_standardized(&self, x: &[f64]) -> (f64, f64) {
        self.warp.predict(&self.augmented_input(x))
    }

    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (m, v) = self.predict_standardized(x);
        (
            self.standardization.invert(m),
            self.standardization.invert_variance(v),
        )
    }
}

fn augment(
    low: &GpPosterior,
    data: &MultiFidelityDataset,
    std: &Standardization,
) -> (Vec<f64>, Vec<f64>) {
    let high = data.high();
    let mut inputs = Vec::with_capacity(high.len() * (data.dim() + 1));
    for x in high.inputs() {
        inputs.extend_from_slice(x);
        inputs.push(low.predict(x).0);
    }
    (inputs, std.apply_all(high.targets()))
}

struct WarpMap<'a> {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    priors: &'a HyperPriorConfig,
    bounds: Bounds,
    dim: usize,
}

impl MapObjective for WarpMap<'_> {
    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn initial_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let p = self.priors;
        let mut v: Vec<f64> = (0..self.dim)
            .map(|_| log_uniform(rng, p.lengthscale_init))
            .collect();
        v.push(log_uniform(rng, p.signal_init));
        v.push(log_uniform(rng, p.lengthscale_init));
        v.extend((0..self.dim).map(|_| log_uniform(rng, p.lengthscale_init)));
        v.push(log_uniform(
            rng,
            [p.signal_init[0] * 1e-2, p.signal_init[1] * 1e-1],
        ));
        v.push(log_uniform(rng, p.effective_noise_init()));
        v
    }

    fn evaluate(&self, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        let hyper = NargpHyperparams::from_vec(theta, self.dim);
        let noise = vec![hyper.noise_variance; self.targets.len()];
        let (lml, mut grad, ngrad) =
            lml_with_gradient(&hyper.kernel(), &self.inputs, &self.targets, &noise, 0.0).ok()?;
        grad.push(hyper.noise_variance * ngrad.iter().sum::<f64>());
        Some((lml, grad))
    }
}

pub fn fit_nargp(
    data: &MultiFidelityDataset,
    priors: &HyperPriorConfig,
    restarts: usize,
    seed: u64,
) -> Result<NargpModel, GpError> {
    fit_nargp_with(
        data,
        priors,
        &NargpFitOptions {
            restarts,
            seed,
            ..Default::default()
        },
    )
}

pub fn fit_nargp_with(
    data: &MultiFidelityDataset,
    priors: &HyperPriorConfig,
    opts: &NargpFitOptions,
) -> Result<NargpModel, GpError> {
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
    if data.high().is_empty() {
        return Err(GpError::InsufficientData {
            needed: 1,
            found: 0,
        });
    }
    priors.validate()?;
    let d = data.dim();
    let std = data.standardization();
    let low_hp = match &opts.low_hyperparams {
        Some(hp) => hp.clone(),
        None => fit_low_level(data.low(), &std, priors, opts.restarts, opts.seed, None)?,
    };
    let nb = priors.effective_noise_bounds();
    let default = NargpHyperparams {
        scale_lengthscales: vec![opts.default_lengthscale; d],
        scale_variance: 1.0,
        warp_lengthscale: 1.0,
        bias_lengthscales: vec![opts.default_lengthscale; d],
        bias_variance: opts.default_bias_variance,
        noise_variance: low_hp.noise_variance.clamp(nb[0], nb[1]),
    };
    if data.high().len() < opts.min_high_for_warp_fit {
        return NargpModel::with_hyperparams(data, &low_hp, default);
    }

    let low = fit_posterior(&standardized(data.low(), &std)?, &low_hp, 0.0)?;
    let (inputs, targets) = augment(&low, data, &std);
    let [ll, lu] = priors.lengthscale_bounds.map(f64::ln);
    let [sl, su] = priors.signal_bounds.map(f64::ln);
    let mut lower = vec![ll; d];
    let mut upper = vec![lu; d];
    lower.extend([sl, ll]);
    upper.extend([su, lu]);
    lower.extend(std::iter::repeat_n(ll, d));
    upper.extend(std::iter::repeat_n(lu, d));
    lower.extend([sl, nb[0].ln()]);
    upper.extend([su, nb[1].ln()]);
    let model = WarpMap {
        inputs,
        targets,
        priors,
        bounds: Bounds::new(lower, upper),
        dim: d,
    };
    let mut warm = Vec::new();
    if let Some(w) = opts.warm_start.as_ref().filter(|w| w.validate(d).is_ok()) {
        warm.push(w.to_vec());
    }
    warm.push(default.to_vec());
    let (theta, _, _) = multistart(&model, opts.restarts, opts.seed, warm, priors.max_iters)?;
    let mut hyper = NargpHyperparams::from_vec(&theta, d);
    hyper.noise_variance = hyper.noise_variance.clamp(nb[0], nb[1]);
    NargpModel::with_hyperparams(data, &low_hp, hyper)
}
