use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::StudyError;
use crate::bayesopt::{HighStageConfig, LowStageConfig, SurrogateKind};
use crate::vehicle::{Perturbation, VehicleConfig};

pub const STUDY_SCHEMA_VERSION: u32 = 1;

/// Normalized manual-tuning vector shipped as the replica baseline.
pub const MANUAL_BASELINE: [f64; 6] = [0.49, 0.42, 0.82, 0.73, 0.32, 0.28];

/// One perturbation benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub id: String,
    #[serde(default)]
    pub perturbation: Perturbation,
}

impl StudySpec {
    pub fn new(id: &str, perturbation: Perturbation) -> Self {
        Self {
            id: id.to_string(),
            perturbation,
        }
    }

    /// Mass, front-axle distance and peak tire force studies.
    pub fn table_one() -> Vec<Self> {
        vec![
            Self::new(
                "mass",
                Perturbation {
                    mass_delta: Some(-300.0),
                    ..Default::default()
                },
            ),
            Self::new(
                "front_axle",
                Perturbation {
                    lf_delta: Some(-0.1),
                    ..Default::default()
                },
            ),
            Self::new("peak_force", peak_force(1.03)),
        ]
    }
}

fn peak_force(scale: f64) -> Perturbation {
    Perturbation {
        peak_force_scale: Some(scale),
        ..Default::default()
    }
}

/// Reference-optimum oracle: a quasi-random sweep followed by independent
/// EI campaigns started from the sweep incumbent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub sweep_points: usize,
    pub campaigns: usize,
    pub iterations: usize,
    /// Quasi-random points added to the sweep incumbent in each campaign's
    /// initial design.
    pub random_initial: usize,
    pub seed: u64,
    pub search: LowStageConfig,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            sweep_points: 20_000,
            campaigns: 10,
            iterations: 100,
            random_initial: 4,
            seed: 2024,
            search: LowStageConfig::default(),
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), StudyError> {
        if self.sweep_points == 0 && self.campaigns == 0 {
            return Err(StudyError::Config("oracle performs no evaluations".into()));
        }
        if self.campaigns > 0 && self.sweep_points == 0 && self.random_initial == 0 {
            return Err(StudyError::Config("oracle campaigns need an initial design".into()));
        }
        self.search.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Peak-force scale factors, one study each.
    pub levels: Vec<f64>,
    pub surrogates: Vec<SurrogateKind>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            levels: vec![1.01, 1.05, 1.10],
            surrogates: vec![SurrogateKind::Ar1, SurrogateKind::SingleFidelity],
        }
    }
}

impl SweepConfig {
    pub fn studies(&self) -> Vec<StudySpec> {
        self.levels
            .iter()
            .map(|&s| StudySpec::new(&format!("peak_force_{}pct", ((s - 1.0) * 100.0).round()), peak_force(s)))
            .collect()
    }
}

/// Frozen-low replica of the vehicle experiment: low data come from the
/// nominal plant, queries go to a perturbed "true plant".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicaConfig {
    pub true_plant: Perturbation,
    pub budget: usize,
    pub dnf_cost: f64,
    pub noise_bounds: Option<[f64; 2]>,
    pub manual_baseline: Vec<f64>,
}

impl Default for ReplicaConfig {
    fn default() -> Self {
        Self {
            true_plant: Perturbation {
                mass_delta: Some(150.0),
                lf_delta: Some(0.08),
                peak_force_scale: Some(0.94),
            },
            budget: 17,
            dnf_cost: 1.0,
            noise_bounds: Some([1e-5, 2e-4]),
            manual_baseline: MANUAL_BASELINE.to_vec(),
        }
    }
}

/// Top-level configuration file shared by all subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub schema_version: u32,
    pub trials: usize,
    /// Explicit trial seeds; empty means `base_seed + i`.
    pub seeds: Vec<u64>,
    pub surrogates: Vec<SurrogateKind>,
    pub vehicle: VehicleConfig,
    pub low: LowStageConfig,
    pub high: HighStageConfig,
    pub studies: Vec<StudySpec>,
    pub sweep: SweepConfig,
    pub oracle: OracleConfig,
    pub replica: ReplicaConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            schema_version: STUDY_SCHEMA_VERSION,
            trials: 5,
            seeds: Vec::new(),
            surrogates: SurrogateKind::ALL.to_vec(),
            vehicle: VehicleConfig::default(),
            low: LowStageConfig::default(),
            high: HighStageConfig::default(),
            studies: StudySpec::table_one(),
            sweep: SweepConfig::default(),
            oracle: OracleConfig::default(),
            replica: ReplicaConfig::default(),
        }
    }
}

impl SuiteConfig {
    pub fn from_toml(text: &str) -> Result<Self, StudyError> {
        let cfg: Self = toml::from_str(text).map_err(|e| StudyError::Config(e.to_string()))?;
        if cfg.schema_version != STUDY_SCHEMA_VERSION {
            return Err(StudyError::Config(format!(
                "schema_version {} is not supported (expected {STUDY_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, StudyError> {
        let text = std::fs::read_to_string(path).map_err(|e| StudyError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            StudyError::Config(m) => StudyError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String, StudyError> {
        toml::to_string(self).map_err(|e| StudyError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        self.vehicle.validate()?;
        self.vehicle.sim.controller.validate()?;
        self.low.validate()?;
        self.high.validate()?;
        self.oracle.validate()?;
        if self.trials == 0 {
            return Err(StudyError::Config("trials must be at least 1".into()));
        }
        if !self.seeds.is_empty() {
            if self.seeds.len() != self.trials {
                return Err(StudyError::Config(format!(
                    "{} seeds listed for {} trials",
                    self.seeds.len(),
                    self.trials
                )));
            }
            let distinct: HashSet<u64> = self.seeds.iter().copied().collect();
            if distinct.len() != self.seeds.len() {
                return Err(StudyError::Config("trial seeds must be distinct".into()));
            }
        }
        if self.surrogates.is_empty() || self.sweep.surrogates.is_empty() {
            return Err(StudyError::Config("no surrogate kinds selected".into()));
        }
        if self.high.dnf_cost != self.vehicle.sim.dnf_cost {
            return Err(StudyError::Config(format!(
                "high.dnf_cost {} differs from vehicle.sim.dnf_cost {}",
                self.high.dnf_cost, self.vehicle.sim.dnf_cost
            )));
        }
        let mut ids = HashSet::new();
        for s in self.studies.iter().chain(self.sweep.studies().iter()) {
            if s.id.is_empty() || s.id.contains(['/', '\\']) {
                return Err(StudyError::Config(format!("invalid study id {:?}", s.id)));
            }
            if !ids.insert(s.id.clone()) {
                return Err(StudyError::Config(format!("duplicate study id {:?}", s.id)));
            }
        }
        if self.sweep.levels.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(StudyError::Config("sweep levels must be positive".into()));
        }
        if self.replica.manual_baseline.len() != 6 || self.replica.manual_baseline.iter().any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(StudyError::Config("manual baseline must be six values in [0, 1]".into()));
        }
        if !(self.replica.dnf_cost.is_finite() && self.replica.dnf_cost > 0.0) {
            return Err(StudyError::Config("replica dnf_cost must be positive".into()));
        }
        if let Some([lo, hi]) = self.replica.noise_bounds {
            if !(lo > 0.0 && lo < hi) {
                return Err(StudyError::Config("replica noise bounds must satisfy 0 < lo < hi".into()));
            }
        }
        Ok(())
    }

    pub fn trial_seeds(&self, base_seed: u64) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.trials as u64).map(|i| base_seed.wrapping_add(i)).collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn study(&self, spec: &StudySpec, surrogates: &[SurrogateKind], base_seed: u64) -> StudyConfig {
        StudyConfig {
            id: spec.id.clone(),
            perturbation: spec.perturbation,
            surrogates: surrogates.to_vec(),
            seeds: self.trial_seeds(base_seed),
            vehicle: self.vehicle.clone(),
            low: self.low.clone(),
            high: self.high.clone(),
        }
    }

    pub fn benchmark_studies(&self, base_seed: u64) -> Vec<StudyConfig> {
        self.studies.iter().map(|s| self.study(s, &self.surrogates, base_seed)).collect()
    }

    pub fn sweep_studies(&self, base_seed: u64) -> Vec<StudyConfig> {
        self.sweep
            .studies()
            .iter()
            .map(|s| self.study(s, &self.sweep.surrogates, base_seed))
            .collect()
    }
}

/// Fully resolved benchmark study: low data from the perturbed plant,
/// queries on the configured (nominal) plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub id: String,
    pub perturbation: Perturbation,
    pub surrogates: Vec<SurrogateKind>,
    pub seeds: Vec<u64>,
    pub vehicle: VehicleConfig,
    pub low: LowStageConfig,
    pub high: HighStageConfig,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), StudyError> {
        if self.seeds.is_empty() {
            return Err(StudyError::Config(format!("study {} has no trials", self.id)));
        }
        if self.surrogates.is_empty() {
            return Err(StudyError::Config(format!("study {} has no surrogate kinds", self.id)));
        }
        let distinct: HashSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(StudyError::Config("trial seeds must be distinct".into()));
        }
        self.vehicle.validate()?;
        self.low.validate()?;
        self.high.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips_through_toml() {
        let cfg = SuiteConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(SuiteConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = SuiteConfig::from_toml("schema_version = 1\ntrials = 2\n[high]\nbudget = 7\n").unwrap();
        assert_eq!(cfg.trials, 2);
        assert_eq!(cfg.high.budget, 7);
        assert_eq!(cfg.studies.len(), 3);
        assert_eq!(cfg.trial_seeds(10), vec![10, 11]);
    }

    #[test]
    fn rejects_bad_files() {
        for text in [
            "schema_version = 2",
            "schema_version = 1\ntrials = 0",
            "schema_version = 1\ntrials = 2\nseeds = [3, 3]",
            "schema_version = 1\nbogus = 1",
            "schema_version = 1\n[high]\ndnf_cost = 0.7",
        ] {
            assert!(matches!(SuiteConfig::from_toml(text), Err(StudyError::Config(_))), "{text}");
        }
    }

    #[test]
    fn sweep_ids_are_percentages() {
        let ids: Vec<String> = SweepConfig::default().studies().into_iter().map(|s| s.id).collect();
        assert_eq!(ids, ["peak_force_1pct", "peak_force_5pct", "peak_force_10pct"]);
    }
}
