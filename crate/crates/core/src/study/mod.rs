//! Benchmark, accuracy-sweep and replica studies on the lap objective, the
//! reference-optimum oracle, the low-fidelity data cache and artifact
//! emission.

mod artifacts;
mod bench;
mod cache;
mod config;
mod objective;
mod oracle;
mod plot;
mod replica;

use std::fmt::Display;
use std::path::Path;

pub use artifacts::{
    emit_artifacts, emit_low_data, emit_oracle_artifacts, emit_replica_artifacts, emit_summary, write_csv, ArtifactSet,
};
pub use bench::{
    aggregate, run_accuracy_sweep, run_benchmark_study, Baselines, MethodAggregate, MethodRun, StudyReport, TrialLow,
};
pub use cache::{cache_key, load_or_generate_low, ArtifactCache};
pub use config::{
    OracleConfig, ReplicaConfig, StudyConfig, StudySpec, SuiteConfig, SweepConfig, MANUAL_BASELINE,
    STUDY_SCHEMA_VERSION,
};
pub use objective::LapObjective;
pub use oracle::{compute_reference_optimum, reference_for_plant, AuditEntry, ReferenceOptimum};
pub use replica::{run_experiment_replica, BaselineCost, ReplicaQuery, ReplicaReport};

use crate::bayesopt::BoError;
use crate::gp::GpError;
use crate::vehicle::VehicleError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StudyError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error(transparent)]
    Optimization(#[from] BoError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl From<GpError> for StudyError {
    fn from(e: GpError) -> Self {
        StudyError::Optimization(e.into())
    }
}

impl StudyError {
    pub fn io(path: &Path, e: impl Display) -> Self {
        StudyError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// Whether the failure comes from bad user input rather than numerics
    /// or the file system.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            StudyError::Config(_)
                | StudyError::Vehicle(VehicleError::InvalidConfig(_))
                | StudyError::Optimization(BoError::Usage(_))
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, StudyError::Io { .. } | StudyError::Vehicle(VehicleError::Io { .. }))
    }
}
