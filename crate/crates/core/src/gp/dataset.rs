use serde::{Deserialize, Serialize};

use super::GpError;

/// Tolerance when checking that normalized coordinates lie in the unit cube.
const CUBE_TOL: f64 = 1e-12;

/// A point in the normalized parameter cube `[0, 1]^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(coords: Vec<f64>) -> Result<Self, GpError> {
        check_unit_cube(&coords)?;
        Ok(Self(coords))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_unit_cube(coords: &[f64]) -> Result<(), GpError> {
    match coords
        .iter()
        .position(|c| !c.is_finite() || *c < -CUBE_TOL || *c > 1.0 + CUBE_TOL)
    {
        Some(i) => Err(GpError::InvalidInput(format!(
            "coordinate {i} = {} outside [0, 1]",
            coords[i]
        ))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    Low,
    High,
}

impl Fidelity {
    pub fn level(self) -> u8 {
        match self {
            Fidelity::Low => 1,
            Fidelity::High => 2,
        }
    }
}

/// Affine target standardization `z = (y - mean) / std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
}

impl Standardization {
    pub const IDENTITY: Self = Self {
        mean: 0.0,
        std: 1.0,
    };

    /// Population mean and standard deviation of `targets`. A constant or
    /// single-element series keeps unit scale.
    pub fn fit(targets: &[f64]) -> Self {
        if targets.is_empty() {
            return Self::IDENTITY;
        }
        let n = targets.len() as f64;
        let mean = targets.iter().sum::<f64>() / n;
        let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        Self {
            mean,
            std: if std > 1e-12 * mean.abs().max(1.0) {
                std
            } else {
                1.0
            },
        }
    }

    pub fn apply(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn invert_variance(&self, v: f64) -> f64 {
        v * self.std * self.std
    }

    pub fn apply_all(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.apply(y)).collect()
    }
}

/// Fidelity-tagged observations `(xi_i, y_i)` on the unit cube.
///
/// Targets are stored in original units; [`Dataset::standardization`] gives
/// the metadata used by the surrogates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    fidelity: Fidelity,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    #[serde(default)]
    frozen: bool,
}

impl Dataset {
    pub fn new(dim: usize, fidelity: Fidelity) -> Self {
        Self {
            dim,
            fidelity,
            inputs: Vec::new(),
            targets: Vec::new(),
            frozen: false,
        }
    }

    pub fn from_rows(
        dim: usize,
        fidelity: Fidelity,
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
    ) -> Result<Self, GpError> {
        if inputs.len() != targets.len() {
            return Err(GpError::DimensionMismatch {
                expected: inputs.len(),
                found: targets.len(),
            });
        }
        let mut ds = Self::new(dim, fidelity);
        for (x, y) in inputs.into_iter().zip(targets) {
            ds.push(x, y)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<(), GpError> {
        if self.frozen {
            return Err(GpError::Frozen);
        }
        if x.len() != self.dim {
            return Err(GpError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        check_unit_cube(&x)?;
        if !y.is_finite() {
            return Err(GpError::InvalidInput(format!("non-finite target {y}")));
        }
        self.inputs.push(x);
        self.targets.push(y);
        Ok(())
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn frozen(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fidelity(&self) -> Fidelity {
        self.fidelity
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i]
    }

    /// Row-major copy of the inputs.
    pub fn flat_inputs(&self) -> Vec<f64> {
        self.inputs.iter().flatten().copied().collect()
    }

    pub fn standardization(&self) -> Standardization {
        Standardization::fit(&self.targets)
    }

    /// Index and value of the smallest target (first on ties).
    pub fn best(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &y) in self.targets.iter().enumerate() {
            if best.is_none_or(|(_, b)| y < b) {
                best = Some((i, y));
            }
        }
        best
    }
}
