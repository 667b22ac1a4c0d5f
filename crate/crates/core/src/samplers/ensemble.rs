//! Deep ensembles: independent MAP fits from independent prior draws.

use super::SampleSet;
use crate::error::{invalid, Error, Result};
use crate::model::{train_map, OptConfig, Target};
use crate::par;
use crate::rng::split_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleOutput {
    pub samples: SampleSet,
    /// Indices of members whose training diverged.
    pub dropped: Vec<usize>,
}

/// Trains `n_members` networks, member `i` initialised from a seed derived
/// from `(seed, i)`.
pub fn deep_ensemble<T: Target + ?Sized>(
    target: &T,
    n_members: usize,
    opt: &OptConfig,
    seed: u64,
) -> Result<EnsembleOutput> {
    let seeds: Vec<u64> = (0..n_members as u64).map(|i| split_seed(seed, &[i])).collect();
    deep_ensemble_with_seeds(target, &seeds, opt, seed)
}

/// Trains one member per entry of `member_seeds`.
///
/// Diverged members are dropped; more than 10% dropped is an error.
pub fn deep_ensemble_with_seeds<T: Target + ?Sized>(
    target: &T,
    member_seeds: &[u64],
    opt: &OptConfig,
    seed: u64,
) -> Result<EnsembleOutput> {
    if member_seeds.is_empty() {
        return Err(invalid("an ensemble needs at least one member"));
    }
    let fits = par::map_slice(member_seeds, |&s| train_map(target, &opt.with_seed(s)));
    let mut samples = Vec::with_capacity(fits.len());
    let mut dropped = Vec::new();
    for (i, fit) in fits.into_iter().enumerate() {
        match fit {
            Ok(w) => samples.push(w),
            Err(Error::Divergence { .. }) => dropped.push(i),
            Err(e) => return Err(e),
        }
    }
    let total = member_seeds.len();
    if dropped.len() * 10 > total {
        return Err(Error::EnsembleCollapse {
            dropped: dropped.len(),
            total,
        });
    }
    if !dropped.is_empty() {
        log::warn!("dropped {} of {total} diverged ensemble members", dropped.len());
    }
    let samples = SampleSet::new(samples, "deep_ensemble", seed)?.with_hyper("learning_rate", opt.lr_initial);
    Ok(EnsembleOutput { samples, dropped })
}
