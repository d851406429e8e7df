//! Bayesian optimization on the unit cube.
//!
//! The low-fidelity stage collects a dataset with a single-fidelity GP,
//! first spreading queries with integrated posterior variance and then
//! exploiting with expected improvement. The high-fidelity stage keeps that
//! dataset frozen and only grows the high level, choosing each query by
//! expected improvement under one of three surrogates.

mod acquisition;
mod campaign;
mod regret;

pub use acquisition::{
    expected_improvement, maximize_acquisition, normal_cdf, normal_pdf, AcquisitionMax,
    IntegratedVariance, SearchDomain,
};
pub use campaign::{
    run_high_fidelity_stage, run_low_fidelity_stage, run_single_fidelity_search, AcquisitionKind,
    CampaignState, Evaluation, FnObjective, HighStageConfig, Incumbent, LowStageConfig, Objective,
    QueryRecord, SurrogateHyperparams, SurrogateKind, CAMPAIGN_SCHEMA_VERSION,
};
pub use regret::{simple_regret, RegretTrace};

use thiserror::Error;

use crate::gp::GpError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("acquisition optimization failed: {0}")]
    Optimization(String),
    #[error(transparent)]
    Model(#[from] GpError),
    #[error("objective failed at {x:?}: {message}")]
    Objective { x: Vec<f64>, message: String },
    #[error(
        "low-fidelity data changed during the high-fidelity stage: {expected} -> {found} points"
    )]
    FrozenLow { expected: usize, found: usize },
    #[error("campaign state: {0}")]
    State(String),
}

/// Derives an independent stream seed from a base seed and a tag
/// (SplitMix64 finalizer over their combination).
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed
        ^ tag
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(0x632b_e59b_d9b4_e019);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
