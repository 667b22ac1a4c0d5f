use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::par;
use crate::rng::rng_from_seed;

/// Predictive intervals at several coverage levels over a fixed set of test
/// inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveBand {
    /// Nominal coverage levels `1 − α`.
    pub levels: Vec<f64>,
    /// Mean prediction per test input.
    pub mean: Vec<f64>,
    /// `lower[l][i]`: lower bound at level `l`, test input `i`.
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

impl PredictiveBand {
    pub fn n_test(&self) -> usize {
        self.mean.len()
    }

    pub fn level_index(&self, level: f64) -> Option<usize> {
        self.levels.iter().position(|&l| (l - level).abs() < 1e-12)
    }

    /// `1{y_i ∈ [lower, upper]}` at the given level index.
    pub fn contains(&self, level_idx: usize, targets: &[f64]) -> Vec<bool> {
        let (lo, hi) = (&self.lower[level_idx], &self.upper[level_idx]);
        targets
            .iter()
            .enumerate()
            .map(|(i, &y)| lo[i] <= y && y <= hi[i])
            .collect()
    }
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Bands from function draws `f[draw][test]` augmented with Gaussian noise.
///
/// Every draw is combined with the same `n_noise` standard normal variates
/// `z_j` (seeded by `seed`), giving the mixture `f_i(x) + σ z_j`; bands are
/// its empirical `[α/2, 1 − α/2]` quantiles. With `σ = 0` the noise is
/// skipped.
pub fn predictive_band(
    function_draws: &[Vec<f64>],
    noise_sigma: f64,
    levels: &[f64],
    n_noise: usize,
    seed: u64,
) -> Result<PredictiveBand> {
    if function_draws.is_empty() {
        return Err(invalid("predictive bands need at least one function draw"));
    }
    if let Some(bad) = levels.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
        return Err(invalid(format!("coverage level {bad} is outside (0, 1)")));
    }
    if !(noise_sigma >= 0.0) || (noise_sigma > 0.0 && n_noise == 0) {
        return Err(invalid("noise scale must be non-negative with at least one noise draw"));
    }
    let n_test = function_draws[0].len();
    if function_draws.iter().any(|f| f.len() != n_test) {
        return Err(invalid("all function draws must cover the same test inputs"));
    }
    let noise: Vec<f64> = if noise_sigma > 0.0 {
        let mut rng = rng_from_seed(seed);
        (0..n_noise)
            .map(|_| noise_sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect()
    } else {
        vec![0.0]
    };
    let n_draws = function_draws.len() as f64;
    let per_x = par::map_range(n_test, |x| {
        let mut values: Vec<f64> = Vec::with_capacity(function_draws.len() * noise.len());
        for f in function_draws {
            values.extend(noise.iter().map(|z| f[x] + z));
        }
        values.sort_by(f64::total_cmp);
        let mean = function_draws.iter().map(|f| f[x]).sum::<f64>() / n_draws;
        let bounds: Vec<(f64, f64)> = levels
            .iter()
            .map(|&l| {
                let alpha = 1.0 - l;
                (
                    quantile_sorted(&values, alpha / 2.0),
                    quantile_sorted(&values, 1.0 - alpha / 2.0),
                )
            })
            .collect();
        (mean, bounds)
    });
    let mut band = PredictiveBand {
        levels: levels.to_vec(),
        mean: Vec::with_capacity(n_test),
        lower: vec![Vec::with_capacity(n_test); levels.len()],
        upper: vec![Vec::with_capacity(n_test); levels.len()],
    };
    for (mean, bounds) in per_x {
        band.mean.push(mean);
        for (l, (lo, hi)) in bounds.into_iter().enumerate() {
            band.lower[l].push(lo);
            band.upper[l].push(hi);
        }
    }
    Ok(band)
}

/// `Q² = 1 − Σ(yᵢ − ŷᵢ)² / Σ(yᵢ − ȳ)²`.
pub fn q2(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() || targets.len() < 2 {
        return Err(invalid("Q² needs matching prediction and target vectors of length ≥ 2"));
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let ss_tot: f64 = targets.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss_tot == 0.0 {
        return Err(invalid("Q² is undefined for constant targets"));
    }
    let ss_res: f64 = predictions.iter().zip(targets).map(|(p, y)| (y - p) * (y - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Coverage of one approximation across replicated training sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub level: f64,
    /// Coverage over test inputs, one entry per replicate.
    pub picp: Vec<f64>,
    /// Coverage over replicates and test inputs jointly.
    pub mcp: f64,
    /// Coverage over replicates, one entry per test input.
    pub ccp: Vec<f64>,
    /// Mean of `|ccp − level|`.
    pub ccp_mae: f64,
    pub q2: Vec<f64>,
}

impl CoverageReport {
    /// Reduces an indicator array `hits[replicate][test]`.
    pub fn from_indicators(hits: &[Vec<bool>], level: f64, q2: Vec<f64>) -> Result<Self> {
        if hits.is_empty() || hits[0].is_empty() {
            return Err(invalid("coverage needs at least one replicate and one test input"));
        }
        let n_test = hits[0].len();
        if hits.iter().any(|h| h.len() != n_test) {
            return Err(invalid("replicates were evaluated on different test sets"));
        }
        let frac = |it: &mut dyn Iterator<Item = bool>, n: usize| it.filter(|&b| b).count() as f64 / n as f64;
        let picp: Vec<f64> = hits.iter().map(|h| frac(&mut h.iter().copied(), n_test)).collect();
        let ccp: Vec<f64> = (0..n_test)
            .map(|i| frac(&mut hits.iter().map(|h| h[i]), hits.len()))
            .collect();
        let total: usize = hits.iter().map(|h| h.iter().filter(|&&b| b).count()).sum();
        let mcp = total as f64 / (hits.len() * n_test) as f64;
        let ccp_mae = ccp.iter().map(|c| (c - level).abs()).sum::<f64>() / n_test as f64;
        Ok(Self {
            level,
            picp,
            mcp,
            ccp,
            ccp_mae,
            q2,
        })
    }
}

/// Coverage of `bands` (one per replicate) against shared test targets at
/// `level`, plus the Q² of each band's mean prediction.
pub fn coverage(bands: &[PredictiveBand], targets: &[f64], level: f64) -> Result<CoverageReport> {
    let mut hits = Vec::with_capacity(bands.len());
    let mut q2s = Vec::with_capacity(bands.len());
    for band in bands {
        if band.n_test() != targets.len() {
            return Err(invalid("replicates were evaluated on different test sets"));
        }
        let idx = band
            .level_index(level)
            .ok_or_else(|| invalid(format!("level {level} was not computed")))?;
        hits.push(band.contains(idx, targets));
        q2s.push(q2(&band.mean, targets)?);
    }
    CoverageReport::from_indicators(&hits, level, q2s)
}
