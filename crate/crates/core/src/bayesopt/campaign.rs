use serde::{Deserialize, Serialize};

use super::acquisition::{
    expected_improvement, maximize_acquisition, AcquisitionMax, IntegratedVariance, SearchDomain,
};
use super::regret::{simple_regret, RegretTrace};
use super::{mix_seed, BoError};
use crate::gp::{
    fit_hyperparameters_from, fit_posterior, Dataset, Fidelity, GpPosterior, HyperPriorConfig,
    KernelHyperparams, Standardization,
};
use crate::lowdisc::QuasiRandom;
use crate::multifidelity::{
    fit_ar1_with, fit_nargp_with, standardized, Ar1FitOptions, Ar1Hyperparams,
    MultiFidelityDataset, NargpFitOptions, NargpHyperparams,
};

pub const CAMPAIGN_SCHEMA_VERSION: u32 = 1;

const TAG_INITIAL: u64 = 1;
const TAG_QUADRATURE: u64 = 2;
const TAG_LOW_FIT: u64 = 3;
const TAG_FIT: u64 = 1 << 20;
const TAG_CANDIDATES: u64 = 2 << 20;

/// Outcome of one black-box evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub cost: f64,
    /// The run did not finish and `cost` is the heuristic penalty.
    pub dnf: bool,
}

impl Evaluation {
    pub fn finished(cost: f64) -> Self {
        Self { cost, dnf: false }
    }

    pub fn did_not_finish(cost: f64) -> Self {
        Self { cost, dnf: true }
    }
}

/// Black-box cost on the unit cube.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> Result<Evaluation, BoError>;
}

/// Adapts a plain closure; every evaluation counts as finished.
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation, BoError> {
        Ok(Evaluation::finished((self.f)(x)))
    }
}

impl<O: Objective + ?Sized> Objective for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation, BoError> {
        (**self).evaluate(x)
    }
}

fn evaluate<O: Objective + ?Sized>(objective: &O, x: &[f64]) -> Result<Evaluation, BoError> {
    let e = objective.evaluate(x).map_err(|err| match err {
        BoError::Objective { .. } => err,
        other => BoError::Objective {
            x: x.to_vec(),
            message: other.to_string(),
        },
    })?;
    if !e.cost.is_finite() {
        return Err(BoError::Objective {
            x: x.to_vec(),
            message: format!("non-finite cost {}", e.cost),
        });
    }
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    SingleFidelity,
    Ar1,
    Nargp,
}

impl SurrogateKind {
    pub const ALL: [Self; 3] = [Self::Ar1, Self::Nargp, Self::SingleFidelity];

    /// Method name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Self::SingleFidelity => "SFGP-BO",
            Self::Ar1 => "AR1GP-BO",
            Self::Nargp => "NARGP-BO",
        }
    }
}

impl std::fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// How a query was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    Initial,
    Ipv,
    Ei,
    /// The best low-fidelity parameter, used as the single-fidelity
    /// baseline's first query.
    LowIncumbent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub cost: f64,
    pub dnf: bool,
    pub acquisition: AcquisitionKind,
    pub acquisition_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub x: Vec<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurrogateHyperparams {
    SingleFidelity(KernelHyperparams),
    Ar1(Ar1Hyperparams),
    Nargp(NargpHyperparams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowStageConfig {
    pub initial: usize,
    pub ipv: usize,
    pub ei: usize,
    pub quadrature: usize,
    pub domain: SearchDomain,
    pub priors: HyperPriorConfig,
    /// Random restarts for a full hyperparameter fit.
    pub restarts: usize,
    /// Random restarts added to the warm start on the other refits.
    pub refit_restarts: usize,
    /// Every this many iterations the refit uses `restarts`.
    pub full_refit_every: usize,
}

impl Default for LowStageConfig {
    fn default() -> Self {
        Self {
            initial: 5,
            ipv: 40,
            ei: 40,
            quadrature: 512,
            domain: SearchDomain::default(),
            priors: HyperPriorConfig::default(),
            restarts: 5,
            refit_restarts: 1,
            full_refit_every: 10,
        }
    }
}

impl LowStageConfig {
    pub fn total(&self) -> usize {
        self.initial + self.ipv + self.ei
    }

    pub fn validate(&self) -> Result<(), BoError> {
        if self.quadrature == 0 {
            return Err(BoError::Usage(
                "IPV quadrature needs at least one point".into(),
            ));
        }
        if self.initial == 0 {
            return Err(BoError::Usage(
                "low-fidelity stage needs at least one initial point".into(),
            ));
        }
        self.priors.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HighStageConfig {
    pub budget: usize,
    /// Best-so-far value reported before the first query.
    pub dnf_cost: f64,
    pub domain: SearchDomain,
    pub priors: HyperPriorConfig,
    pub restarts: usize,
    pub refit_restarts: usize,
    pub full_refit_every: usize,
    /// Place the lengthscale prior on the AR1 bias kernel as well.
    pub bias_lengthscale_prior: bool,
}

impl Default for HighStageConfig {
    fn default() -> Self {
        Self {
            budget: 40,
            dnf_cost: 0.5,
            domain: SearchDomain::default(),
            priors: HyperPriorConfig::default(),
            restarts: 5,
            refit_restarts: 1,
            full_refit_every: 10,
            bias_lengthscale_prior: false,
        }
    }
}

impl HighStageConfig {
    pub fn validate(&self) -> Result<(), BoError> {
        if self.budget == 0 {
            return Err(BoError::Usage(
                "high-fidelity budget must be at least 1".into(),
            ));
        }
        if !self.dnf_cost.is_finite() {
            return Err(BoError::Usage(format!("dnf_cost = {}", self.dnf_cost)));
        }
        self.priors.validate()?;
        Ok(())
    }

    fn restarts_for(&self, iteration: usize, warm: bool) -> usize {
        let full = !warm || (self.full_refit_every > 0 && iteration % self.full_refit_every == 0);
        if full {
            self.restarts
        } else {
            self.refit_restarts
        }
    }
}

/// Default hyperparameters when there is too little data to fit.
fn default_hyperparams(dim: usize, priors: &HyperPriorConfig) -> KernelHyperparams {
    KernelHyperparams::isotropic(dim, 0.5, 1.0, priors.effective_noise_bounds()[0])
}

/// Standardizes `data`, fits MAP hyperparameters (or defaults below two
/// points) and conditions the posterior.
fn fit_single(
    data: &Dataset,
    priors: &HyperPriorConfig,
    restarts: usize,
    seed: u64,
    warm: Option<&KernelHyperparams>,
) -> Result<(GpPosterior, Standardization, KernelHyperparams), BoError> {
    let std = data.standardization();
    let z = standardized(data, &std)?;
    let hp = if z.len() < 2 {
        default_hyperparams(data.dim(), priors)
    } else {
        fit_hyperparameters_from(&z, priors, restarts, seed, warm)?.hyperparams
    };
    let post = fit_posterior(&z, &hp, 0.0)?;
    Ok((post, std, hp))
}

fn min_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::INFINITY, f64::min)
}

fn maximize_ei<F>(
    predict: F,
    best: f64,
    domain: &SearchDomain,
    seed: u64,
) -> Result<AcquisitionMax, BoError>
where
    F: Fn(&[f64]) -> (f64, f64) + Sync,
{
    maximize_acquisition(
        |x| {
            let (m, v) = predict(x);
            expected_improvement(m, v.max(0.0), best)
        },
        domain,
        seed,
    )
}

/// Collects a low-fidelity dataset: quasi-random initial points, then IPV
/// queries, then EI queries, refitting a single-fidelity GP before each.
/// The returned dataset is frozen.
pub fn run_low_fidelity_stage<O: Objective + ?Sized>(
    objective: &O,
    cfg: &LowStageConfig,
    seed: u64,
) -> Result<Dataset, BoError> {
    let design = QuasiRandom::new(objective.dim(), mix_seed(seed, TAG_INITIAL)).points(cfg.initial);
    run_single_fidelity_search(objective, design, cfg, seed)
}

/// Single-fidelity BO from an explicit initial design: `cfg.ipv` IPV
/// queries followed by `cfg.ei` EI queries (`cfg.initial` is ignored).
/// Returns every evaluation as a frozen dataset.
pub fn run_single_fidelity_search<O: Objective + ?Sized>(
    objective: &O,
    design: Vec<Vec<f64>>,
    cfg: &LowStageConfig,
    seed: u64,
) -> Result<Dataset, BoError> {
    cfg.validate()?;
    let dim = objective.dim();
    if design.is_empty() {
        return Err(BoError::Usage("initial design is empty".into()));
    }
    let domain = SearchDomain { dim, ..cfg.domain };
    let mut data = Dataset::new(dim, Fidelity::Low);
    for x in design {
        let e = evaluate(objective, &x)?;
        data.push(x, e.cost)?;
    }
    let quad = IntegratedVariance::quadrature(dim, cfg.quadrature, mix_seed(seed, TAG_QUADRATURE));
    let mut warm: Option<KernelHyperparams> = None;
    for n in 0..cfg.ipv + cfg.ei {
        let full = warm.is_none() || (cfg.full_refit_every > 0 && n % cfg.full_refit_every == 0);
        let restarts = if full {
            cfg.restarts
        } else {
            cfg.refit_restarts
        };
        let (post, std, hp) = fit_single(
            &data,
            &cfg.priors,
            restarts,
            mix_seed(seed, TAG_FIT + n as u64),
            warm.as_ref(),
        )?;
        if data.len() >= 2 {
            warm = Some(hp);
        }
        let acq_seed = mix_seed(seed, TAG_CANDIDATES + n as u64);
        let chosen = if n < cfg.ipv {
            let ipv = IntegratedVariance::new(&post, quad.clone())?;
            maximize_acquisition(|x| ipv.evaluate(x), &domain, acq_seed)?
        } else {
            let best = min_of(data.targets().iter().map(|&y| std.apply(y)));
            maximize_ei(|x| post.predict(x), best, &domain, acq_seed)?
        };
        log::debug!(
            "low stage {} / {}: {} at {:?}",
            n + 1,
            cfg.ipv + cfg.ei,
            if n < cfg.ipv { "IPV" } else { "EI" },
            chosen.x
        );
        let e = evaluate(objective, &chosen.x)?;
        data.push(chosen.x, e.cost)?;
    }
    data.freeze();
    Ok(data)
}

/// State of a frozen-low high-fidelity campaign; serializable for resume
/// and audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignState {
    pub schema_version: u32,
    pub surrogate: SurrogateKind,
    pub data: MultiFidelityDataset,
    /// Number of high-fidelity evaluations performed so far.
    pub iteration: usize,
    pub best: Option<Incumbent>,
    pub seed: u64,
    pub dnf_cost: f64,
    /// Acquisition used for each query, in order.
    pub schedule: Vec<AcquisitionKind>,
    pub queries: Vec<QueryRecord>,
    /// `best_so_far[0]` is `dnf_cost`; entry `n` is the best cost after
    /// `n` queries.
    pub best_so_far: Vec<f64>,
    pub frozen_low_len: usize,
    pub low_hyperparams: Option<KernelHyperparams>,
    pub hyperparams: Option<SurrogateHyperparams>,
}

impl CampaignState {
    pub fn new(
        low: Dataset,
        surrogate: SurrogateKind,
        cfg: &HighStageConfig,
        seed: u64,
    ) -> Result<Self, BoError> {
        cfg.validate()?;
        if !low.is_frozen() {
            return Err(BoError::Usage("low-fidelity data must be frozen".into()));
        }
        if low.is_empty() {
            return Err(BoError::Usage("low-fidelity data is empty".into()));
        }
        let data = MultiFidelityDataset::with_empty_high(low)?;
        let low_hyperparams = match surrogate {
            SurrogateKind::SingleFidelity => None,
            _ => {
                let (_, _, hp) = fit_single(
                    data.low(),
                    &cfg.priors,
                    cfg.restarts,
                    mix_seed(seed, TAG_LOW_FIT),
                    None,
                )?;
                Some(hp)
            }
        };
        Ok(Self {
            schema_version: CAMPAIGN_SCHEMA_VERSION,
            surrogate,
            frozen_low_len: data.low().len(),
            data,
            iteration: 0,
            best: None,
            seed,
            dnf_cost: cfg.dnf_cost,
            schedule: Vec::new(),
            queries: Vec::new(),
            best_so_far: vec![cfg.dnf_cost],
            low_hyperparams,
            hyperparams: None,
        })
    }

    pub fn to_json(&self) -> Result<String, BoError> {
        serde_json::to_string_pretty(self).map_err(|e| BoError::State(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, BoError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| BoError::State(e.to_string()))?;
        let version = value.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(CAMPAIGN_SCHEMA_VERSION as u64) {
            return Err(BoError::State(format!(
                "unsupported schema version {version:?}, expected {CAMPAIGN_SCHEMA_VERSION}"
            )));
        }
        serde_json::from_value(value).map_err(|e| BoError::State(e.to_string()))
    }

    /// Fails if the low level has changed since the stage started.
    pub fn check_frozen_low(&self) -> Result<(), BoError> {
        let found = self.data.low().len();
        if found != self.frozen_low_len || !self.data.low().is_frozen() {
            return Err(BoError::FrozenLow {
                expected: self.frozen_low_len,
                found,
            });
        }
        Ok(())
    }

    pub fn regret(&self, reference: f64) -> Result<RegretTrace, BoError> {
        Ok(simple_regret(&self.best_so_far, reference)?.with_seed(self.seed))
    }

    fn warm_single(&self) -> Option<&KernelHyperparams> {
        match &self.hyperparams {
            Some(SurrogateHyperparams::SingleFidelity(hp)) => Some(hp),
            _ => None,
        }
    }

    /// Chooses the next query without evaluating it.
    fn select(
        &mut self,
        cfg: &HighStageConfig,
    ) -> Result<(Vec<f64>, AcquisitionKind, Option<f64>), BoError> {
        let n = self.iteration + 1;
        let dim = self.data.dim();
        let domain = SearchDomain { dim, ..cfg.domain };
        let fit_seed = mix_seed(self.seed, TAG_FIT + n as u64);
        let acq_seed = mix_seed(self.seed, TAG_CANDIDATES + n as u64);
        let high = self.data.high();

        let (chosen, fitted) = match self.surrogate {
            SurrogateKind::SingleFidelity => {
                if high.is_empty() {
                    let (i, _) = self.data.low().best().expect("low data is non-empty");
                    return Ok((
                        self.data.low().row(i).to_vec(),
                        AcquisitionKind::LowIncumbent,
                        None,
                    ));
                }
                let warm = self.warm_single().cloned();
                let restarts = cfg.restarts_for(n, warm.is_some());
                let (post, std, hp) =
                    fit_single(high, &cfg.priors, restarts, fit_seed, warm.as_ref())?;
                let best = min_of(high.targets().iter().map(|&y| std.apply(y)));
                let fitted = (high.len() >= 2).then_some(SurrogateHyperparams::SingleFidelity(hp));
                (
                    maximize_ei(|x| post.predict(x), best, &domain, acq_seed)?,
                    fitted,
                )
            }
            SurrogateKind::Ar1 => {
                let warm_start = match &self.hyperparams {
                    Some(SurrogateHyperparams::Ar1(h)) => Some(h.clone()),
                    _ => None,
                };
                let opts = Ar1FitOptions {
                    restarts: cfg.restarts_for(n, warm_start.is_some()),
                    seed: fit_seed,
                    bias_prior: cfg.bias_lengthscale_prior,
                    low_hyperparams: self.low_hyperparams.clone(),
                    warm_start,
                    ..Default::default()
                };
                let model = fit_ar1_with(&self.data, &cfg.priors, &opts)?;
                let std = model.standardization();
                let best = if high.is_empty() {
                    min_of(
                        self.data
                            .low()
                            .inputs()
                            .iter()
                            .map(|x| model.predict_standardized(x).0),
                    )
                } else {
                    min_of(high.targets().iter().map(|&y| std.apply(y)))
                };
                let fitted = Some(SurrogateHyperparams::Ar1(model.hyperparams().clone()));
                (
                    maximize_ei(|x| model.predict_standardized(x), best, &domain, acq_seed)?,
                    fitted,
                )
            }
            SurrogateKind::Nargp => {
                let std = self.data.standardization();
                if high.is_empty() {
                    let low_hp = self
                        .low_hyperparams
                        .as_ref()
                        .expect("fitted at construction");
                    let post = fit_posterior(&standardized(self.data.low(), &std)?, low_hp, 0.0)?;
                    let best = min_of(self.data.low().targets().iter().map(|&y| std.apply(y)));
                    (
                        maximize_ei(|x| post.predict(x), best, &domain, acq_seed)?,
                        None,
                    )
                } else {
                    let warm_start = match &self.hyperparams {
                        Some(SurrogateHyperparams::Nargp(h)) => Some(h.clone()),
                        _ => None,
                    };
                    let opts = NargpFitOptions {
                        restarts: cfg.restarts_for(n, warm_start.is_some()),
                        seed: fit_seed,
                        low_hyperparams: self.low_hyperparams.clone(),
                        warm_start,
                        ..Default::default()
                    };
                    let model = fit_nargp_with(&self.data, &cfg.priors, &opts)?;
                    let best = min_of(high.targets().iter().map(|&y| std.apply(y)));
                    let fitted = Some(SurrogateHyperparams::Nargp(model.hyperparams().clone()));
                    (
                        maximize_ei(|x| model.predict_standardized(x), best, &domain, acq_seed)?,
                        fitted,
                    )
                }
            }
        };
        if fitted.is_some() {
            self.hyperparams = fitted;
        }
        Ok((chosen.x, AcquisitionKind::Ei, Some(chosen.value)))
    }

    /// Selects, evaluates and records one high-fidelity query.
    pub fn step<O: Objective + ?Sized>(
        &mut self,
        objective: &O,
        cfg: &HighStageConfig,
    ) -> Result<&QueryRecord, BoError> {
        self.check_frozen_low()?;
        if objective.dim() != self.data.dim() {
            return Err(BoError::Usage(format!(
                "objective has dimension {}, data has {}",
                objective.dim(),
                self.data.dim()
            )));
        }
        let (x, acquisition, acquisition_value) = self.select(cfg)?;
        let e = evaluate(objective, &x)?;
        self.data.push_high(x.clone(), e.cost)?;
        self.iteration += 1;
        if self.best.as_ref().is_none_or(|b| e.cost < b.cost) {
            self.best = Some(Incumbent {
                x: x.clone(),
                cost: e.cost,
            });
        }
        let prev = *self
            .best_so_far
            .last()
            .expect("trace starts with the DNF cost");
        self.best_so_far.push(prev.min(e.cost));
        self.schedule.push(acquisition);
        self.queries.push(QueryRecord {
            iteration: self.iteration,
            x,
            cost: e.cost,
            dnf: e.dnf,
            acquisition,
            acquisition_value,
        });
        self.check_frozen_low()?;
        log::debug!(
            "{} query {}: cost {:.5} (best {:.5})",
            self.surrogate,
            self.iteration,
            e.cost,
            self.best_so_far[self.iteration]
        );
        Ok(self.queries.last().expect("just pushed"))
    }
}

/// Runs `cfg.budget` high-fidelity queries with the low data frozen.
pub fn run_high_fidelity_stage<O: Objective + ?Sized>(
    objective: &O,
    low: &Dataset,
    surrogate: SurrogateKind,
    cfg: &HighStageConfig,
    seed: u64,
) -> Result<CampaignState, BoError> {
    let mut state = CampaignState::new(low.clone(), surrogate, cfg, seed)?;
    while state.iteration < cfg.budget {
        state.step(objective, cfg)?;
    }
    Ok(state)
}
