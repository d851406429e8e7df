use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{load_or_generate_low, ArtifactCache, LapObjective, ReferenceOptimum, StudyConfig, StudyError, SuiteConfig};
use super::config::MANUAL_BASELINE;
use crate::bayesopt::{run_high_fidelity_stage, Objective, QueryRecord, RegretTrace, SurrogateKind};
use crate::par;
use crate::vehicle::perturb_plant;

/// One surrogate's campaign in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: SurrogateKind,
    pub trial: usize,
    pub seed: u64,
    pub trace: RegretTrace,
    pub queries: Vec<QueryRecord>,
}

/// Per-iteration statistics of one method's regret over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: SurrogateKind,
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Low-fidelity data summary for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLow {
    pub trial: usize,
    pub seed: u64,
    pub evaluations: usize,
    pub best_simulated: f64,
    pub incumbent: Vec<f64>,
    /// Cost of the low-fidelity incumbent on the queried plant.
    pub incumbent_true_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    /// Cost of the manual-tuning vector on the queried plant.
    pub manual: f64,
    /// Per trial, cost of the best low-fidelity parameters on the queried
    /// plant.
    pub best_from_simulation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub reference_optimum: f64,
    pub reference_provenance: String,
    pub reference_evaluations: usize,
    pub runs: Vec<MethodRun>,
    pub aggregates: Vec<MethodAggregate>,
    pub lows: Vec<TrialLow>,
    pub baselines: Baselines,
    /// Set when an observed cost fell below the reference optimum.
    pub clamped: bool,
}

impl StudyReport {
    pub fn id(&self) -> &str {
        &self.config.id
    }

    pub fn budget(&self) -> usize {
        self.config.high.budget
    }

    pub fn aggregate_for(&self, method: SurrogateKind) -> Option<&MethodAggregate> {
        self.aggregates.iter().find(|a| a.method == method)
    }

    pub fn runs_for(&self, method: SurrogateKind) -> impl Iterator<Item = &MethodRun> {
        self.runs.iter().filter(move |r| r.method == method)
    }

    /// Mean regret of `method` after `n` queries.
    pub fn mean_at(&self, method: SurrogateKind, n: usize) -> Option<f64> {
        self.aggregate_for(method).and_then(|a| a.mean.get(n).copied())
    }

    /// Median regret of `method` after `n` queries.
    pub fn median_at(&self, method: SurrogateKind, n: usize) -> Option<f64> {
        self.aggregate_for(method).and_then(|a| a.median.get(n).copied())
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Mean, median, min and max over equally long traces.
pub fn aggregate(method: SurrogateKind, traces: &[&RegretTrace]) -> Result<MethodAggregate, StudyError> {
    let len = traces
        .first()
        .map(|t| t.len())
        .ok_or_else(|| StudyError::Config(format!("no traces to aggregate for {method}")))?;
    if traces.iter().any(|t| t.len() != len) {
        return Err(StudyError::Config(format!("{method} traces differ in length")));
    }
    let mut out = MethodAggregate {
        method,
        mean: Vec::with_capacity(len),
        median: Vec::with_capacity(len),
        min: Vec::with_capacity(len),
        max: Vec::with_capacity(len),
    };
    for n in 0..len {
        let mut column: Vec<f64> = traces.iter().map(|t| t.regret[n]).collect();
        out.mean.push(column.iter().sum::<f64>() / column.len() as f64);
        out.min.push(column.iter().copied().fold(f64::INFINITY, f64::min));
        out.max.push(column.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        out.median.push(median(&mut column));
    }
    Ok(out)
}

/// Runs every surrogate kind on every trial seed. Low-fidelity data come
/// from the perturbed plant (cached per seed); queries go to the configured
/// plant and regret is measured against `reference`.
pub fn run_benchmark_study(
    cfg: &StudyConfig,
    reference: &ReferenceOptimum,
    cache: &ArtifactCache,
) -> Result<StudyReport, StudyError> {
    cfg.validate()?;
    let trajectory = Arc::new(cfg.vehicle.reference()?);
    let low_plant = perturb_plant(&cfg.vehicle.plant, &cfg.perturbation)?;
    let low_objective = LapObjective::new(low_plant, trajectory.clone(), cfg.vehicle.sim)?;
    let high_objective = LapObjective::new(cfg.vehicle.plant, trajectory, cfg.vehicle.sim)?;
    log::info!("study {}: {} trials, {:?}", cfg.id, cfg.seeds.len(), cfg.surrogates);

    let trials: Vec<(usize, u64)> = cfg.seeds.iter().copied().enumerate().collect();
    let results = par::map_slice(&trials, |&(trial, seed)| {
        let (low, hit) =
            load_or_generate_low(&low_objective, &cfg.vehicle.track, &cfg.vehicle.speed, &cfg.low, seed, cache)?;
        log::info!("study {} trial {trial}: low data ready ({})", cfg.id, if hit { "cached" } else { "generated" });
        let (best_index, best_simulated) = low
            .best()
            .ok_or_else(|| StudyError::Config("empty low-fidelity data".into()))?;
        let incumbent = low.row(best_index).to_vec();
        let incumbent_true_cost = high_objective.evaluate(&incumbent)?.cost;
        let runs = par::map_slice(&cfg.surrogates, |&kind| {
            let state = run_high_fidelity_stage(&high_objective, &low, kind, &cfg.high, seed)?;
            let trace = state.regret(reference.value)?.with_seed(seed);
            log::info!("study {} trial {trial} {kind}: final regret {:.3e}", cfg.id, trace.last());
            Ok::<_, StudyError>(MethodRun {
                method: kind,
                trial,
                seed,
                trace,
                queries: state.queries,
            })
        });
        let low_summary = TrialLow {
            trial,
            seed,
            evaluations: low.len(),
            best_simulated,
            incumbent,
            incumbent_true_cost,
        };
        Ok::<_, StudyError>((low_summary, runs.into_iter().collect::<Result<Vec<_>, _>>()?))
    });

    let mut lows = Vec::with_capacity(trials.len());
    let mut runs = Vec::with_capacity(trials.len() * cfg.surrogates.len());
    for r in results {
        let (low, trial_runs) = r?;
        lows.push(low);
        runs.extend(trial_runs);
    }
    // Method-major order keeps the CSV grouped by method.
    runs.sort_by_key(|r| (cfg.surrogates.iter().position(|&k| k == r.method), r.trial));
    let aggregates = cfg
        .surrogates
        .iter()
        .map(|&k| {
            let traces: Vec<&RegretTrace> = runs.iter().filter(|r| r.method == k).map(|r| &r.trace).collect();
            aggregate(k, &traces)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let manual = high_objective.evaluate(&MANUAL_BASELINE)?.cost;
    let clamped = runs.iter().any(|r| r.trace.clamped);
    Ok(StudyReport {
        config: cfg.clone(),
        reference_optimum: reference.value,
        reference_provenance: reference.provenance.clone(),
        reference_evaluations: reference.evaluations(),
        baselines: Baselines {
            manual,
            best_from_simulation: lows.iter().map(|l| l.incumbent_true_cost).collect(),
        },
        runs,
        aggregates,
        lows,
        clamped,
    })
}

/// One benchmark per peak-force level, all on the same trial seeds.
pub fn run_accuracy_sweep(
    suite: &SuiteConfig,
    base_seed: u64,
    reference: &ReferenceOptimum,
    cache: &ArtifactCache,
) -> Result<Vec<StudyReport>, StudyError> {
    suite
        .sweep_studies(base_seed)
        .iter()
        .map(|cfg| run_benchmark_study(cfg, reference, cache))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayesopt::simple_regret;

    #[test]
    fn aggregate_of_one_trace_is_the_trace() {
        let t = simple_regret(&[0.5, 0.3, 0.2], 0.1).unwrap();
        let a = aggregate(SurrogateKind::Ar1, &[&t]).unwrap();
        assert_eq!(a.mean, t.regret);
        assert_eq!(a.median, t.regret);
        assert_eq!(a.min, t.regret);
        assert_eq!(a.max, t.regret);
    }

    #[test]
    fn aggregate_envelopes_trials() {
        let a = simple_regret(&[0.5, 0.3, 0.2], 0.0).unwrap();
        let b = simple_regret(&[0.4, 0.4, 0.1], 0.0).unwrap();
        let g = aggregate(SurrogateKind::Nargp, &[&a, &b]).unwrap();
        for n in 0..3 {
            assert!(g.min[n] <= g.mean[n] && g.mean[n] <= g.max[n]);
            assert_eq!(g.median[n], g.mean[n]);
        }
        assert_eq!(g.min, [0.4, 0.3, 0.1]);
    }

    #[test]
    fn ragged_traces_are_rejected() {
        let a = simple_regret(&[0.5, 0.3], 0.0).unwrap();
        let b = simple_regret(&[0.4], 0.0).unwrap();
        assert!(aggregate(SurrogateKind::Ar1, &[&a, &b]).is_err());
    }
}
