//! On-disk store for HMC reference samples: a little-endian `f64` array
//! (`n_samples × dim`, row-major) next to a JSON manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmcManifest {
    /// Hash of everything the samples depend on.
    pub key: u64,
    pub task: String,
    pub replicate: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub dim: usize,
    pub step_size: f64,
    pub leapfrog_steps: usize,
    pub acceptance_rate: f64,
    pub chain_acceptance: Vec<f64>,
    pub data_file: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CachedHmc {
    pub manifest: HmcManifest,
    pub samples: Vec<ParamVector>,
}

fn stem(task: &str, replicate: usize) -> String {
    format!("hmc_{task}_r{replicate:04}")
}

pub fn manifest_path(dir: &Path, task: &str, replicate: usize) -> PathBuf {
    dir.join(format!("{}.json", stem(task, replicate)))
}

/// Writes the samples and manifest; `manifest.data_file` is filled in here.
pub fn store(dir: &Path, mut manifest: HmcManifest, samples: &[ParamVector]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let data_file = format!("{}.f64", stem(&manifest.task, manifest.replicate));
    let mut bytes = Vec::with_capacity(samples.len() * manifest.dim * 8);
    for s in samples {
        for v in s.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(dir.join(&data_file), bytes)?;
    manifest.data_file = data_file;
    manifest.n_samples = samples.len();
    let path = manifest_path(dir, &manifest.task, manifest.replicate);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Loads the entry for `(task, replicate)` if it exists and was computed
/// under `key`. Stale or missing entries give `Ok(None)`; malformed ones an
/// error.
pub fn load(dir: &Path, task: &str, replicate: usize, key: u64) -> Result<Option<CachedHmc>> {
    let path = manifest_path(dir, task, replicate);
    if !path.exists() {
        return Ok(None);
    }
    let manifest: HmcManifest = serde_json::from_str(&fs::read_to_string(&path)?)?;
    if manifest.key != key {
        return Ok(None);
    }
    let bytes = fs::read(dir.join(&manifest.data_file))?;
    if bytes.len() != manifest.n_samples * manifest.dim * 8 {
        return Err(Error::Schema {
            file: manifest.data_file.clone(),
            message: format!(
                "expected {} values, found {} bytes",
                manifest.n_samples * manifest.dim,
                bytes.len()
            ),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let samples = values
        .chunks(manifest.dim.max(1))
        .take(manifest.n_samples)
        .map(|c| ParamVector(c.to_vec()))
        .collect();
    Ok(Some(CachedHmc { manifest, samples }))
}
