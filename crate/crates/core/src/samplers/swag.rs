//! SWAG: a Gaussian fitted to the iterates of constant-step SGD started at
//! the MAP, with diagonal plus low-rank covariance.

use std::collections::VecDeque;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SampleSet;
use crate::error::{check_len, invalid, Error, Result};
use crate::model::{stochastic_grad, MinibatchSchedule, ParamVector, Target};
use crate::rng::{child_rng, rng_from_seed};

/// Which objective the SGD learning rate applies to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossScale {
    /// `U(w)` itself.
    Total,
    /// `U(w) / N`, the usual deep-learning convention.
    #[default]
    PerDatum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwagConfig {
    pub step_size: f64,
    /// SGD steps; every iterate is collected.
    pub iterations: usize,
    /// Maximum number of deviation columns kept.
    pub rank: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub loss_scale: LossScale,
    pub seed: u64,
}

impl SwagConfig {
    pub fn new(step_size: f64, iterations: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            step_size,
            iterations,
            rank: 20,
            batch_size,
            loss_scale: LossScale::default(),
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwagModel {
    pub mean: ParamVector,
    pub diag_variance: ParamVector,
    /// Most recent centred iterates, oldest first.
    pub deviations: Vec<ParamVector>,
    /// Number of iterates averaged.
    pub count: usize,
}

/// Running first and second moments plus a window of recent deviations.
#[derive(Clone, Debug)]
pub struct SwagAccumulator {
    mean: Vec<f64>,
    sq_mean: Vec<f64>,
    deviations: VecDeque<ParamVector>,
    rank: usize,
    count: usize,
}

impl SwagAccumulator {
    pub fn new(dim: usize, rank: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            sq_mean: vec![0.0; dim],
            deviations: VecDeque::with_capacity(rank),
            rank,
            count: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, w: &[f64]) -> Result<()> {
        check_len("SWAG iterate", self.mean.len(), w.len())?;
        self.count += 1;
        let n = self.count as f64;
        for i in 0..w.len() {
            self.mean[i] += (w[i] - self.mean[i]) / n;
            self.sq_mean[i] += (w[i] * w[i] - self.sq_mean[i]) / n;
        }
        if self.rank > 0 {
            if self.deviations.len() == self.rank {
                self.deviations.pop_front();
            }
            self.deviations
                .push_back(ParamVector(w.iter().zip(&self.mean).map(|(a, m)| a - m).collect()));
        }
        Ok(())
    }

    pub fn finish(&self) -> SwagModel {
        let diag_variance = self
            .mean
            .iter()
            .zip(&self.sq_mean)
            .map(|(m, s)| (s - m * m).max(0.0))
            .collect();
        SwagModel {
            mean: ParamVector(self.mean.clone()),
            diag_variance: ParamVector(diag_variance),
            deviations: self.deviations.iter().cloned().collect(),
            count: self.count,
        }
    }
}

/// Runs `w ← w − ε∇̂U(w)` (or `ε∇̂U(w)/N` under [`LossScale::PerDatum`])
/// from `map_params` and accumulates every iterate.
pub fn swag_fit<T: Target + ?Sized>(target: &T, map_params: &ParamVector, config: &SwagConfig) -> Result<SwagModel> {
    check_len("MAP parameters", target.dim(), map_params.len())?;
    if !(config.step_size >= 0.0 && config.step_size.is_finite()) || config.iterations == 0 {
        return Err(invalid(
            "SWAG needs a finite non-negative step and at least one iteration",
        ));
    }
    let mut schedule = MinibatchSchedule::with_rng(config.batch_size, target.n_data(), child_rng(config.seed, &[1]))?;
    let mut acc = SwagAccumulator::new(target.dim(), config.rank);
    let mut w = map_params.clone();
    let lr = match config.loss_scale {
        LossScale::Total => config.step_size,
        LossScale::PerDatum => config.step_size / target.n_data() as f64,
    };
    for k in 0..config.iterations {
        let g = stochastic_grad(target, &w, &mut schedule, None)?;
        for (wi, gi) in w.iter_mut().zip(g.iter()) {
            *wi -= lr * gi;
        }
        if !w.is_finite() {
            return Err(Error::Divergence {
                iteration: k,
                reason: "non-finite SGD iterate".into(),
            });
        }
        acc.push(&w)?;
    }
    Ok(acc.finish())
}

/// Draws `w = mean + (1/√2)·√diag∘z₁ + (1/√(2(K−1)))·D·z₂`.
///
/// With a single deviation column the low-rank term is undefined; the draw
/// then falls back to the diagonal Gaussian at full scale.
pub fn swag_sample(model: &SwagModel, n: usize, seed: u64) -> Result<SampleSet> {
    let d = model.mean.len();
    check_len("SWAG variance", d, model.diag_variance.len())?;
    let k = model.deviations.len();
    let low_rank = k >= 2;
    if !low_rank {
        log::warn!("SWAG collected {k} deviation(s); sampling from the diagonal part only");
    }
    let std: Vec<f64> = model.diag_variance.iter().map(|v| v.max(0.0).sqrt()).collect();
    let diag_scale = if low_rank { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
    let rank_scale = if low_rank {
        1.0 / (2.0 * (k as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut rng = rng_from_seed(seed);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let mut w = model.mean.clone();
        for i in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            w[i] += diag_scale * std[i] * z;
        }
        if low_rank {
            for col in &model.deviations {
                let z: f64 = StandardNormal.sample(&mut rng);
                for i in 0..d {
                    w[i] += rank_scale * col[i] * z;
                }
            }
        }
        samples.push(w);
    }
    SampleSet::new(samples, "swag", seed)
}
