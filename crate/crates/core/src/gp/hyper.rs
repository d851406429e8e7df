//! Evidence maximization with priors and box constraints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::posterior::lml_with_gradient;
use super::{Dataset, GpError, KernelHyperparams};
use crate::optim::{minimize_projected, Bounds, LbfgsOptions};
use crate::par;

/// Gamma distribution in shape/rate form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    /// Gamma(3, 6) in shape/rate form: mean 0.5 in unit-cube input units.
    pub const LENGTHSCALE_DEFAULT: Self = Self {
        shape: 3.0,
        rate: 6.0,
    };

    pub fn ln_pdf(&self, x: f64) -> f64 {
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln()
            - self.rate * x
    }

    /// Derivative of `ln_pdf(x)` with respect to `ln x`.
    pub fn d_ln_pdf_dlog(&self, x: f64) -> f64 {
        (self.shape - 1.0) - self.rate * x
    }
}

/// Priors, boxes and initialization ranges for hyperparameter fitting.
///
/// All variances refer to standardized targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperPriorConfig {
    pub lengthscale_prior: Option<GammaPrior>,
    /// Hard box on the noise variance; replaces `noise_bounds` when set.
    pub noise_box: Option<[f64; 2]>,
    pub lengthscale_init: [f64; 2],
    pub signal_init: [f64; 2],
    pub noise_init: [f64; 2],
    pub lengthscale_bounds: [f64; 2],
    pub signal_bounds: [f64; 2],
    pub noise_bounds: [f64; 2],
    pub max_iters: usize,
}

impl Default for HyperPriorConfig {
    fn default() -> Self {
        Self {
            lengthscale_prior: Some(GammaPrior::LENGTHSCALE_DEFAULT),
            noise_box: None,
            lengthscale_init: [0.05, 2.0],
            signal_init: [0.1, 10.0],
            noise_init: [1e-6, 1e-2],
            lengthscale_bounds: [1e-3, 1e2],
            signal_bounds: [1e-4, 1e2],
            noise_bounds: [1e-6, 1.0],
            max_iters: 200,
        }
    }
}

impl HyperPriorConfig {
    pub fn effective_noise_bounds(&self) -> [f64; 2] {
        self.noise_box.unwrap_or(self.noise_bounds)
    }

    /// Noise initialization range, intersected with the box when one is set.
    pub fn effective_noise_init(&self) -> [f64; 2] {
        match self.noise_box {
            Some(b) => b,
            None => self.noise_init,
        }
    }

    pub fn validate(&self) -> Result<(), GpError> {
        let pairs = [
            ("lengthscale_init", self.lengthscale_init),
            ("signal_init", self.signal_init),
            ("noise_init", self.noise_init),
            ("lengthscale_bounds", self.lengthscale_bounds),
            ("signal_bounds", self.signal_bounds),
            ("noise_bounds", self.effective_noise_bounds()),
        ];
        for (name, [lo, hi]) in pairs {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(GpError::InvalidHyperparams(format!(
                    "{name} = [{lo}, {hi}] is not a positive interval"
                )));
            }
        }
        if let Some(p) = self.lengthscale_prior {
            if !(p.shape > 0.0 && p.rate > 0.0) {
                return Err(GpError::InvalidHyperparams(format!(
                    "invalid gamma prior {p:?}"
                )));
            }
        }
        Ok(())
    }

    /// Pulls values decoded from log space back inside the linear bounds;
    /// `exp(ln(b))` can land one ulp outside `b`.
    pub fn clamp(&self, hp: &mut KernelHyperparams) {
        let [ll, lu] = self.lengthscale_bounds;
        for l in &mut hp.lengthscales {
            *l = l.clamp(ll, lu);
        }
        hp.signal_variance = hp.signal_variance.clamp(self.signal_bounds[0], self.signal_bounds[1]);
        let [nl, nu] = self.effective_noise_bounds();
        hp.noise_variance = hp.noise_variance.clamp(nl, nu);
    }

    pub(crate) fn lengthscale_log_prior(&self, lengthscales: &[f64], grad: &mut [f64]) -> f64 {
        let Some(prior) = self.lengthscale_prior else {
            return 0.0;
        };
        let mut v = 0.0;
        for (g, &l) in grad.iter_mut().zip(lengthscales) {
            v += prior.ln_pdf(l);
            *g += prior.d_ln_pdf_dlog(l);
        }
        v
    }
}

/// A penalized likelihood to maximize over an unconstrained-by-construction
/// (log-space, boxed) parameter vector.
pub(crate) trait MapObjective: Sync {
    fn bounds(&self) -> &Bounds;
    fn initial_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    /// Objective value and gradient, `None` where undefined.
    fn evaluate(&self, theta: &[f64]) -> Option<(f64, Vec<f64>)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub initial_objective: f64,
    pub final_objective: f64,
}

/// Runs the optimizer from every warm start and from `restarts` random
/// initial points; returns the best parameters, their objective, and a
/// record per start. Ties go to the earliest start.
pub(crate) fn multistart<M: MapObjective>(
    model: &M,
    restarts: usize,
    seed: u64,
    warm_starts: Vec<Vec<f64>>,
    max_iters: usize,
) -> Result<(Vec<f64>, f64, Vec<RestartRecord>), GpError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = warm_starts;
    for _ in 0..restarts {
        starts.push(model.initial_point(&mut rng));
    }
    let opts = LbfgsOptions {
        max_iters,
        grad_tol: 1e-5,
        f_tol: 1e-9,
        ..Default::default()
    };
    let results = par::map_slice(&starts, |x0| {
        let mut x0 = x0.clone();
        model.bounds().project(&mut x0);
        let initial = model
            .evaluate(&x0)
            .map(|(v, _)| v)
            .unwrap_or(f64::NEG_INFINITY);
        let min = minimize_projected(
            |t| {
                model
                    .evaluate(t)
                    .map(|(v, g)| (-v, g.iter().map(|c| -c).collect()))
            },
            &x0,
            model.bounds(),
            &opts,
        );
        match min {
            Some(m) => (Some(m.x), initial, -m.value),
            None => (None, initial, f64::NEG_INFINITY),
        }
    });
    let finals: Vec<f64> = results
        .iter()
        .map(|(x, _, v)| {
            if x.is_some() && v.is_finite() {
                *v
            } else {
                f64::NAN
            }
        })
        .collect();
    let best = par::argmax_first(&finals).ok_or(GpError::FitFailed)?;
    let records = results
        .iter()
        .map(|(_, i, f)| RestartRecord {
            initial_objective: *i,
            final_objective: *f,
        })
        .collect();
    let (x, _, v) = &results[best];
    Ok((
        x.clone().expect("finite objective implies a point"),
        *v,
        records,
    ))
}

pub(crate) fn log_uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi <= lo {
        return lo.ln();
    }
    rng.random_range(lo.ln()..hi.ln())
}

/// Single-fidelity MAP problem over `[log l, log s, log n]`.
struct SingleGpMap<'a> {
    inputs: Vec<f64>,
    targets: &'a [f64],
    prior_mean: f64,
    priors: &'a HyperPriorConfig,
    bounds: Bounds,
    dim: usize,
}

impl<'a> SingleGpMap<'a> {
    fn new(data: &'a Dataset, priors: &'a HyperPriorConfig, prior_mean: f64) -> Self {
        let d = data.dim();
        let nb = priors.effective_noise_bounds();
        let mut lower = vec![priors.lengthscale_bounds[0].ln(); d];
        let mut upper = vec![priors.lengthscale_bounds[1].ln(); d];
        lower.push(priors.signal_bounds[0].ln());
        upper.push(priors.signal_bounds[1].ln());
        lower.push(nb[0].ln());
        upper.push(nb[1].ln());
        Self {
            inputs: data.flat_inputs(),
            targets: data.targets(),
            prior_mean,
            priors,
            bounds: Bounds::new(lower, upper),
            dim: d,
        }
    }
}

impl MapObjective for SingleGpMap<'_> {
    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn initial_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.dim)
            .map(|_| log_uniform(rng, self.priors.lengthscale_init))
            .collect();
        v.push(log_uniform(rng, self.priors.signal_init));
        v.push(log_uniform(rng, self.priors.effective_noise_init()));
        v
    }

    fn evaluate(&self, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        let hp = KernelHyperparams::from_log_vec(theta);
        let (lml, mut grad) =
            lml_log_space(&self.inputs, self.targets, &hp, self.prior_mean).ok()?;
        let lp = self
            .priors
            .lengthscale_log_prior(&hp.lengthscales, &mut grad[..self.dim]);
        Some((lml + lp, grad))
    }
}

fn lml_log_space(
    inputs: &[f64],
    targets: &[f64],
    hp: &KernelHyperparams,
    prior_mean: f64,
) -> Result<(f64, Vec<f64>), GpError> {
    let noise = vec![hp.noise_variance; targets.len()];
    let (value, mut grad, noise_grad) =
        lml_with_gradient(&hp.kernel(), inputs, targets, &noise, prior_mean)?;
    grad.push(hp.noise_variance * noise_grad.iter().sum::<f64>());
    Ok((value, grad))
}

/// Log marginal likelihood of the dataset's targets (as stored) and its
/// gradient with respect to `[log l_1, .., log l_d, log signal, log noise]`.
pub fn log_marginal_likelihood(
    data: &Dataset,
    hp: &KernelHyperparams,
    prior_mean: f64,
) -> Result<(f64, Vec<f64>), GpError> {
    if data.is_empty() {
        return Err(GpError::InsufficientData {
            needed: 1,
            found: 0,
        });
    }
    if hp.dim() != data.dim() {
        return Err(GpError::DimensionMismatch {
            expected: data.dim(),
            found: hp.dim(),
        });
    }
    hp.validate()?;
    lml_log_space(&data.flat_inputs(), data.targets(), hp, prior_mean)
}

/// Penalized objective: log marginal likelihood plus the lengthscale prior.
pub fn map_objective(
    data: &Dataset,
    hp: &KernelHyperparams,
    priors: &HyperPriorConfig,
    prior_mean: f64,
) -> Result<(f64, Vec<f64>), GpError> {
    let (lml, mut grad) = log_marginal_likelihood(data, hp, prior_mean)?;
    let d = hp.dim();
    let lp = priors.lengthscale_log_prior(&hp.lengthscales, &mut grad[..d]);
    Ok((lml + lp, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperFit {
    pub hyperparams: KernelHyperparams,
    pub objective: f64,
    pub restarts: Vec<RestartRecord>,
}

/// MAP hyperparameters for a zero-mean GP on the dataset's targets (as
/// stored; standardize first).
pub fn fit_hyperparameters(
    data: &Dataset,
    priors: &HyperPriorConfig,
    restarts: usize,
    seed: u64,
) -> Result<HyperFit, GpError> {
    fit_hyperparameters_from(data, priors, restarts, seed, None)
}

/// [`fit_hyperparameters`] with an optional warm start tried before the
/// random restarts.
pub fn fit_hyperparameters_from(
    data: &Dataset,
    priors: &HyperPriorConfig,
    restarts: usize,
    seed: u64,
    warm_start: Option<&KernelHyperparams>,
) -> Result<HyperFit, GpError> {
    if data.len() < 2 {
        return Err(GpError::InsufficientData {
            needed: 2,
            found: data.len(),
        });
    }
    priors.validate()?;
    let model = SingleGpMap::new(data, priors, 0.0);
    let warm = warm_start
        .filter(|hp| hp.dim() == data.dim() && hp.validate().is_ok())
        .map(|hp| hp.to_log_vec())
        .into_iter()
        .collect();
    let restarts = if warm_start.is_none() {
        restarts.max(1)
    } else {
        restarts
    };
    let (theta, objective, records) = multistart(&model, restarts, seed, warm, priors.max_iters)?;
    let mut hyperparams = KernelHyperparams::from_log_vec(&theta);
    priors.clamp(&mut hyperparams);
    Ok(HyperFit {
        hyperparams,
        objective,
        restarts: records,
    })
}
