use serde::{Deserialize, Serialize};

use super::BoError;

/// Simple regret per iteration against a reference optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub best_so_far: Vec<f64>,
    pub regret: Vec<f64>,
    pub reference: f64,
    pub seed: u64,
    /// Set when some best-so-far value fell below the reference and its
    /// regret was clamped to zero.
    pub clamped: bool,
}

impl RegretTrace {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn len(&self) -> usize {
        self.regret.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regret.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.regret.last().expect("regret traces are never empty")
    }
}

/// `best_so_far[n] - reference`, clamped at zero with a warning when the
/// reference is not a lower bound.
pub fn simple_regret(best_so_far: &[f64], reference: f64) -> Result<RegretTrace, BoError> {
    if best_so_far.is_empty() {
        return Err(BoError::Usage("empty best-so-far trace".into()));
    }
    if !reference.is_finite() {
        return Err(BoError::Usage(format!(
            "reference optimum {reference} is not finite"
        )));
    }
    let mut clamped = false;
    let mut running = f64::INFINITY;
    let mut best = Vec::with_capacity(best_so_far.len());
    let mut regret = Vec::with_capacity(best_so_far.len());
    for &b in best_so_far {
        running = running.min(b);
        best.push(running);
        let r = running - reference;
        if r < 0.0 {
            clamped = true;
        }
        regret.push(r.max(0.0));
    }
    if clamped {
        log::warn!(
            "best observed cost {} is below the reference optimum {reference}; regret clamped at 0",
            best.last().unwrap()
        );
    }
    Ok(RegretTrace {
        best_so_far: best,
        regret,
        reference,
        seed: 0,
        clamped,
    })
}
