//! MAP estimation with Adam and an exponentially decaying learning rate.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::arch::ParamVector;
use super::target::{neg_log_prior, Target};
use crate::error::{check_len, invalid, Error, Result};
use crate::rng::{rng_from_seed, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptConfig {
    pub iterations: usize,
    pub lr_initial: f64,
    /// Learning rate reached at the last iteration.
    pub lr_final: f64,
    /// Seeds the `N(0, I)` initialisation.
    pub init_seed: u64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            iterations: 5_000,
            lr_initial: 1e-2,
            lr_final: 1e-4,
            init_seed: 0,
            batch_size: None,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptConfig {
    /// Same schedule shape with a different starting learning rate; the final
    /// rate keeps the default 100× decay ratio.
    pub fn with_lr(&self, lr_initial: f64) -> Self {
        let ratio = if self.lr_initial > 0.0 {
            self.lr_final / self.lr_initial
        } else {
            1e-2
        };
        Self {
            lr_initial,
            lr_final: lr_initial * ratio,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, init_seed: u64) -> Self {
        Self {
            init_seed,
            ..self.clone()
        }
    }

    /// `lr_k = lr_initial · (lr_final / lr_initial)^(k / iterations)`.
    pub fn learning_rate(&self, k: usize) -> f64 {
        if self.iterations == 0 {
            return self.lr_initial;
        }
        let t = k as f64 / self.iterations as f64;
        self.lr_initial * (self.lr_final / self.lr_initial).powf(t)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lr_initial > 0.0 && self.lr_final > 0.0) {
            return Err(invalid("learning rates must be positive"));
        }
        if self.batch_size == Some(0) {
            return Err(invalid("batch size must be positive"));
        }
        Ok(())
    }
}

/// Adam moment estimates.
#[derive(Clone, Debug)]
pub(crate) struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub(crate) fn new(dim: usize, cfg: &OptConfig) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
        }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// A draw from the `N(0, I)` prior.
pub fn prior_draw(dim: usize, rng: &mut Rng) -> ParamVector {
    ParamVector((0..dim).map(|_| StandardNormal.sample(rng)).collect())
}

/// Trains from a prior draw seeded by `cfg.init_seed`.
pub fn train_map<T: Target + ?Sized>(target: &T, cfg: &OptConfig) -> Result<ParamVector> {
    let init = prior_draw(target.dim(), &mut rng_from_seed(cfg.init_seed));
    train_map_from(target, init, cfg)
}

/// Minimises `U` with Adam starting at `init`.
///
/// Returns the iterate with the lowest potential seen, so the result is never
/// worse than `init`. With mini-batches the potential is evaluated on the
/// batch estimate and the best iterate is chosen by full-batch potential at
/// the end of the run.
pub fn train_map_from<T: Target + ?Sized>(target: &T, init: ParamVector, cfg: &OptConfig) -> Result<ParamVector> {
    cfg.validate()?;
    let d = target.dim();
    check_len("initial parameters", d, init.len())?;
    let mut params = init;
    if cfg.iterations == 0 {
        return Ok(params);
    }
    let mut schedule = match cfg.batch_size {
        Some(b) if b < target.n_data() => Some(super::target::MinibatchSchedule::new(
            b,
            target.n_data(),
            crate::rng::split_seed(cfg.init_seed, &[0x5eed]),
        )?),
        _ => None,
    };
    let mut adam = Adam::new(d, cfg);
    let mut grad = vec![0.0; d];
    let mut best = params.clone();
    let mut best_u = f64::INFINITY;
    for k in 0..cfg.iterations {
        let u = match schedule.as_mut() {
            None => super::target::potential_and_grad(target, &params, &mut grad),
            Some(s) => {
                let batch = s.next_batch();
                let g = super::target::stochastic_grad_on_batch(target, &params, &batch, None)?;
                grad.copy_from_slice(&g);
                target.neg_log_likelihood(&params, None) + neg_log_prior(&params)
            }
        };
        if !u.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                iteration: k,
                reason: format!("non-finite potential {u} during MAP training"),
            });
        }
        if u <= best_u {
            best_u = u;
            best.copy_from_slice(&params);
        }
        adam.step(&mut params, &grad, cfg.learning_rate(k));
    }
    let u_final = target.neg_log_likelihood(&params, None) + neg_log_prior(&params);
    if !u_final.is_finite() {
        return Err(Error::Divergence {
            iteration: cfg.iterations,
            reason: "non-finite potential after the last update".into(),
        });
    }
    Ok(if u_final <= best_u { params } else { best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{potential, BayesianLinearModel};

    #[test]
    fn zero_iterations_return_initialisation() {
        let m = BayesianLinearModel::new(&[vec![1.0], vec![2.0]], &[1.0, 2.0], 1.0).unwrap();
        let cfg = OptConfig {
            iterations: 0,
            init_seed: 9,
            ..OptConfig::default()
        };
        let init = prior_draw(1, &mut rng_from_seed(9));
        assert_eq!(train_map(&m, &cfg).unwrap(), init);
    }

    #[test]
    fn converges_to_ridge_solution() {
        // Ridge regression with unit penalty equals the posterior mean.
        let feats: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let x = -1.5 + 3.0 * i as f64 / 29.0;
                vec![1.0, x, x * x]
            })
            .collect();
        let ys: Vec<f64> = feats.iter().map(|r| 0.5 - r[1] + 0.8 * r[2]).collect();
        let m = BayesianLinearModel::new(&feats, &ys, 0.3).unwrap();
        let (mean, _) = m.analytic_posterior();
        let cfg = OptConfig {
            iterations: 5_000,
            init_seed: 1,
            ..OptConfig::default()
        };
        let w = train_map(&m, &cfg).unwrap();
        for (a, b) in w.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-3, "{w:?} vs {mean:?}");
        }
        let init = prior_draw(3, &mut rng_from_seed(1));
        assert!(potential(&m, &w).unwrap() <= potential(&m, &init).unwrap());
    }

    #[test]
    fn learning_rate_decays_exponentially() {
        let cfg = OptConfig::default();
        assert_eq!(cfg.learning_rate(0), 1e-2);
        assert!((cfg.learning_rate(2_500) - 1e-3).abs() < 1e-15);
        assert!((cfg.learning_rate(5_000) - 1e-4).abs() < 1e-15);
        let c = cfg.with_lr(0.1);
        assert!((c.lr_final - 1e-3).abs() < 1e-15);
    }
}
