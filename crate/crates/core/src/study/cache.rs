use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LapObjective, StudyError};
use crate::bayesopt::{run_low_fidelity_stage, LowStageConfig};
use crate::gp::Dataset;
use crate::vehicle::{OvalConfig, SimConfig, SpeedConfig, VehicleParams};

/// Hex SHA-256 of the JSON encoding of `material`.
pub fn cache_key(material: &impl Serialize) -> Result<String, StudyError> {
    let bytes = serde_json::to_vec(material).map_err(|e| StudyError::Config(e.to_string()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Serialize, Deserialize)]
struct Entry<M, T> {
    key: String,
    material: M,
    value: T,
}

/// Content-addressed JSON store. Without a directory every lookup misses and
/// nothing is written.
#[derive(Debug, Clone, Default)]
pub struct ArtifactCache {
    dir: Option<PathBuf>,
}

impl ArtifactCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { dir }
    }

    pub fn disabled() -> Self {
        Self { dir: None }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Returns the cached value for `material`, computing and storing it on a
    /// miss. The flag reports a hit.
    pub fn get_or_compute<M, T, F>(&self, prefix: &str, material: &M, compute: F) -> Result<(T, bool), StudyError>
    where
        M: Serialize + DeserializeOwned,
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T, StudyError>,
    {
        let Some(dir) = &self.dir else {
            return Ok((compute()?, false));
        };
        let key = cache_key(material)?;
        let path = dir.join(format!("{prefix}-{}.json", &key[..24]));
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| StudyError::io(&path, e))?;
            match serde_json::from_str::<Entry<M, T>>(&text) {
                Ok(entry) if entry.key == key => {
                    log::info!("cache hit {}", path.display());
                    return Ok((entry.value, true));
                }
                Ok(_) => log::warn!("cache entry {} has a different key; recomputing", path.display()),
                Err(e) => log::warn!("unreadable cache entry {} ({e}); recomputing", path.display()),
            }
        }
        let value = compute()?;
        fs::create_dir_all(dir).map_err(|e| StudyError::io(dir, e))?;
        let entry = Entry { key, material, value };
        let text = serde_json::to_string(&entry).map_err(|e| StudyError::Config(e.to_string()))?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(|e| StudyError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| StudyError::io(&path, e))?;
        Ok((entry.value, false))
    }
}

#[derive(Serialize, Deserialize)]
struct LowKey {
    plant: VehicleParams,
    track: OvalConfig,
    speed: SpeedConfig,
    sim: SimConfig,
    low: LowStageConfig,
    seed: u64,
}

/// Low-fidelity stage on `objective`, keyed by plant, simulation setup,
/// budgets and seed.
pub fn load_or_generate_low(
    objective: &LapObjective,
    track: &OvalConfig,
    speed: &SpeedConfig,
    low: &LowStageConfig,
    seed: u64,
    cache: &ArtifactCache,
) -> Result<(Dataset, bool), StudyError> {
    let material = LowKey {
        plant: *objective.plant(),
        track: *track,
        speed: *speed,
        sim: *objective.sim(),
        low: low.clone(),
        seed,
    };
    let (data, hit) = cache.get_or_compute("low", &material, || Ok(run_low_fidelity_stage(objective, low, seed)?))?;
    if hit && (!data.is_frozen() || data.len() != low.total() || data.dim() != 6) {
        return Err(StudyError::Config(format!(
            "cached low-fidelity data for seed {seed} does not match the configured budgets"
        )));
    }
    Ok((data, hit))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_is_stable_and_sensitive() {
        let a = cache_key(&(1u64, "x", 0.5f64)).unwrap();
        assert_eq!(a, cache_key(&(1u64, "x", 0.5f64)).unwrap());
        assert_ne!(a, cache_key(&(2u64, "x", 0.5f64)).unwrap());
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn second_lookup_hits_and_skips_compute() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ArtifactCache::new(Some(dir.path().to_path_buf()));
        let (v, hit) = cache.get_or_compute("t", &3u64, || Ok(vec![0.1f64, 1.0 / 3.0])).unwrap();
        assert!(!hit);
        let (w, hit) = cache
            .get_or_compute("t", &3u64, || -> Result<Vec<f64>, StudyError> { panic!("recomputed") })
            .unwrap();
        assert!(hit);
        assert_eq!(v, w);
    }
}
