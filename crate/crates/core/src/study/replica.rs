use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{load_or_generate_low, ArtifactCache, LapObjective, ReplicaConfig, StudyError, SuiteConfig};
use crate::bayesopt::{run_high_fidelity_stage, AcquisitionKind, HighStageConfig, Objective, SurrogateKind};
use crate::vehicle::{perturb_plant, SimConfig};

/// One high-fidelity query with its simulated (nominal plant) cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaQuery {
    pub iteration: usize,
    pub acquisition: AcquisitionKind,
    pub x: Vec<f64>,
    pub true_cost: f64,
    pub simulated_cost: f64,
    pub dnf: bool,
    pub best_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCost {
    pub x: Vec<f64>,
    pub simulated_cost: f64,
    pub true_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaReport {
    pub seed: u64,
    pub replica: ReplicaConfig,
    pub high: HighStageConfig,
    pub low_evaluations: usize,
    pub queries: Vec<ReplicaQuery>,
    pub manual: BaselineCost,
    pub best_from_simulation: BaselineCost,
    pub best_from_experiment: BaselineCost,
    /// Low-fidelity data length before and after the campaign.
    pub frozen_low_len: [usize; 2],
}

impl ReplicaReport {
    pub fn high_stage_config(suite: &SuiteConfig) -> HighStageConfig {
        let mut high = suite.high.clone();
        high.budget = suite.replica.budget;
        high.dnf_cost = suite.replica.dnf_cost;
        if let Some(b) = suite.replica.noise_bounds {
            high.priors.noise_box = Some(b);
        }
        high
    }
}

/// Frozen-low AR1 campaign against the replica "true plant". The low data
/// come from the nominal plant; the first query uses them alone.
pub fn run_experiment_replica(suite: &SuiteConfig, seed: u64, cache: &ArtifactCache) -> Result<ReplicaReport, StudyError> {
    suite.validate()?;
    let rc = &suite.replica;
    let vehicle = &suite.vehicle;
    let trajectory = Arc::new(vehicle.reference()?);
    let simulator = LapObjective::new(vehicle.plant, trajectory.clone(), vehicle.sim)?;
    let true_sim = SimConfig {
        dnf_cost: rc.dnf_cost,
        ..vehicle.sim
    };
    let true_plant = LapObjective::new(perturb_plant(&vehicle.plant, &rc.true_plant)?, trajectory, true_sim)?;

    let (low, _) = load_or_generate_low(&simulator, &vehicle.track, &vehicle.speed, &suite.low, seed, cache)?;
    let high = ReplicaReport::high_stage_config(suite);
    let state = run_high_fidelity_stage(&true_plant, &low, SurrogateKind::Ar1, &high, seed)?;
    state.check_frozen_low()?;

    let mut queries = Vec::with_capacity(state.queries.len());
    for (q, best) in state.queries.iter().zip(&state.best_so_far[1..]) {
        queries.push(ReplicaQuery {
            iteration: q.iteration,
            acquisition: q.acquisition,
            x: q.x.clone(),
            true_cost: q.cost,
            simulated_cost: simulator.evaluate(&q.x)?.cost,
            dnf: q.dnf,
            best_cost: *best,
        });
    }
    let baseline = |x: &[f64]| -> Result<BaselineCost, StudyError> {
        Ok(BaselineCost {
            x: x.to_vec(),
            simulated_cost: simulator.evaluate(x)?.cost,
            true_cost: true_plant.evaluate(x)?.cost,
        })
    };
    let (bi, _) = low
        .best()
        .ok_or_else(|| StudyError::Config("empty low-fidelity data".into()))?;
    let best_query = queries
        .iter()
        .fold(None, |b: Option<&ReplicaQuery>, q| match b {
            Some(b) if b.true_cost <= q.true_cost => Some(b),
            _ => Some(q),
        })
        .ok_or_else(|| StudyError::Config("replica budget is zero".into()))?;
    Ok(ReplicaReport {
        seed,
        replica: rc.clone(),
        low_evaluations: low.len(),
        manual: baseline(&rc.manual_baseline)?,
        best_from_simulation: baseline(low.row(bi))?,
        best_from_experiment: BaselineCost {
            x: best_query.x.clone(),
            simulated_cost: best_query.simulated_cost,
            true_cost: best_query.true_cost,
        },
        frozen_low_len: [low.len(), state.data.low().len()],
        high,
        queries,
    })
}
