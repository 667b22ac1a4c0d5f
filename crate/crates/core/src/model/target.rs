//! The potential `U(w) = −log p(Y|X,w) − log p(w)` and its gradients for any
//! model with a Gaussian `N(0, I)` prior on its parameters.

use rand::seq::index::sample as sample_indices;

use super::arch::ParamVector;
use crate::error::{check_len, invalid, Error, Result};
use crate::rng::{rng_from_seed, Rng};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// A posterior over `dim()` parameters with prior `N(0, I)`.
///
/// Implementors supply the negative log-likelihood of individual observations
/// (normalising constants included) and its gradient; everything else is
/// derived here.
pub trait Target: Sync {
    fn dim(&self) -> usize;

    fn n_data(&self) -> usize;

    /// `−Σ_{i ∈ batch} log p(Y_i | X_i, w)`; `None` means every observation.
    fn neg_log_likelihood(&self, params: &[f64], batch: Option<&[usize]>) -> f64;

    /// Adds the gradient of [`Target::neg_log_likelihood`] into `grad`.
    fn add_neg_log_likelihood_grad(&self, params: &[f64], batch: Option<&[usize]>, grad: &mut [f64]);

    /// Both at once; returns the negative log-likelihood.
    fn neg_log_likelihood_and_grad(&self, params: &[f64], batch: Option<&[usize]>, grad: &mut [f64]) -> f64 {
        self.add_neg_log_likelihood_grad(params, batch, grad);
        self.neg_log_likelihood(params, batch)
    }

    /// Identifies the data this target was built from. Used to detect
    /// variance-reduction anchors computed against another posterior.
    fn fingerprint(&self) -> u64;
}

/// `½‖w‖² + ½·d·log(2π)`.
pub fn neg_log_prior(params: &[f64]) -> f64 {
    0.5 * params.iter().map(|w| w * w).sum::<f64>() + 0.5 * params.len() as f64 * LN_2PI
}

/// `U(w)`, both Gaussian normalising constants included.
pub fn potential<T: Target + ?Sized>(target: &T, params: &[f64]) -> Result<f64> {
    check_len("parameter vector", target.dim(), params.len())?;
    Ok(target.neg_log_likelihood(params, None) + neg_log_prior(params))
}

/// `∇U(w)`, exact and full-batch.
pub fn grad_potential<T: Target + ?Sized>(target: &T, params: &[f64]) -> Result<ParamVector> {
    check_len("parameter vector", target.dim(), params.len())?;
    let mut grad = params.to_vec();
    target.add_neg_log_likelihood_grad(params, None, &mut grad);
    Ok(ParamVector(grad))
}

/// `U(w)` and `∇U(w)` in one pass.
pub(crate) fn potential_and_grad<T: Target + ?Sized>(target: &T, params: &[f64], grad: &mut [f64]) -> f64 {
    grad.copy_from_slice(params);
    target.neg_log_likelihood_and_grad(params, None, grad) + neg_log_prior(params)
}

/// Uniform mini-batches drawn without replacement.
#[derive(Clone, Debug)]
pub struct MinibatchSchedule {
    batch_size: usize,
    n: usize,
    rng: Rng,
}

impl MinibatchSchedule {
    pub fn new(batch_size: usize, n: usize, seed: u64) -> Result<Self> {
        Self::with_rng(batch_size, n, rng_from_seed(seed))
    }

    pub fn with_rng(batch_size: usize, n: usize, rng: Rng) -> Result<Self> {
        if batch_size == 0 || batch_size > n {
            return Err(invalid(format!("batch size {batch_size} must lie in [1, {n}]")));
        }
        Ok(Self { batch_size, n, rng })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn is_full_batch(&self) -> bool {
        self.batch_size == self.n
    }

    /// Next batch of distinct indices. A full batch is returned in order.
    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.is_full_batch() {
            return (0..self.n).collect();
        }
        sample_indices(&mut self.rng, self.n, self.batch_size).into_vec()
    }
}

/// Control-variate anchor `η` together with `∇U(η)`.
///
/// Fields are private so that `anchor_full_grad` can only be produced by
/// evaluating the full gradient at `anchor`.
#[derive(Clone, Debug)]
pub struct VarianceReductionState {
    anchor: ParamVector,
    anchor_full_grad: ParamVector,
    update_period: Option<usize>,
    fingerprint: u64,
}

impl VarianceReductionState {
    /// `update_period = None` keeps the anchor fixed (CV); `Some(m)` re-anchors
    /// every `m` iterations (SVRG).
    pub fn new<T: Target + ?Sized>(target: &T, anchor: ParamVector, update_period: Option<usize>) -> Result<Self> {
        if update_period == Some(0) {
            return Err(invalid("re-anchoring period must be positive"));
        }
        let anchor_full_grad = grad_potential(target, &anchor)?;
        Ok(Self {
            anchor,
            anchor_full_grad,
            update_period,
            fingerprint: target.fingerprint(),
        })
    }

    pub fn anchor(&self) -> &ParamVector {
        &self.anchor
    }

    pub fn anchor_full_grad(&self) -> &ParamVector {
        &self.anchor_full_grad
    }

    pub fn update_period(&self) -> Option<usize> {
        self.update_period
    }

    pub fn reanchor<T: Target + ?Sized>(&mut self, target: &T, anchor: &[f64]) -> Result<()> {
        self.anchor = ParamVector(anchor.to_vec());
        self.anchor_full_grad = grad_potential(target, anchor)?;
        self.fingerprint = target.fingerprint();
        Ok(())
    }

    /// Re-anchors at `position` when `iteration` is a multiple of the period.
    pub fn maybe_reanchor<T: Target + ?Sized>(
        &mut self,
        target: &T,
        iteration: usize,
        position: &[f64],
    ) -> Result<bool> {
        match self.update_period {
            Some(m) if iteration > 0 && iteration.is_multiple_of(m) => {
                self.reanchor(target, position)?;
                Ok(true)
            }
            _ => Ok(false),
        }
    }
}

/// Mini-batch gradient estimate on an explicit batch.
///
/// Plain: `(N/|B|)·Σ_{i∈B} ∇(−log p(Y_i|X_i,w)) + w`.
/// Variance-reduced: `∇U(η) + Ĝ(w) − Ĝ(η)` with the same batch in both `Ĝ`.
pub fn stochastic_grad_on_batch<T: Target + ?Sized>(
    target: &T,
    params: &[f64],
    batch: &[usize],
    vr: Option<&VarianceReductionState>,
) -> Result<ParamVector> {
    let d = target.dim();
    check_len("parameter vector", d, params.len())?;
    if batch.is_empty() {
        return Err(invalid("empty mini-batch"));
    }
    let full = batch.len() == target.n_data() && batch.iter().enumerate().all(|(i, &b)| i == b);
    let scale = target.n_data() as f64 / batch.len() as f64;
    let batch_arg = if full { None } else { Some(batch) };
    match vr {
        None => {
            let mut g = vec![0.0; d];
            target.add_neg_log_likelihood_grad(params, batch_arg, &mut g);
            Ok(ParamVector(
                g.iter().zip(params).map(|(gi, wi)| scale * gi + wi).collect(),
            ))
        }
        Some(state) => {
            if state.fingerprint != target.fingerprint() {
                return Err(Error::StaleAnchor);
            }
            check_len("anchor", d, state.anchor.len())?;
            let mut g_w = vec![0.0; d];
            let mut g_eta = vec![0.0; d];
            target.add_neg_log_likelihood_grad(params, batch_arg, &mut g_w);
            target.add_neg_log_likelihood_grad(&state.anchor, batch_arg, &mut g_eta);
            Ok(ParamVector(
                (0..d)
                    .map(|i| {
                        let g_hat_w = scale * g_w[i] + params[i];
                        let g_hat_eta = scale * g_eta[i] + state.anchor[i];
                        state.anchor_full_grad[i] + (g_hat_w - g_hat_eta)
                    })
                    .collect(),
            ))
        }
    }
}

/// Draws the next batch from `schedule` and evaluates the gradient estimate.
pub fn stochastic_grad<T: Target + ?Sized>(
    target: &T,
    params: &[f64],
    schedule: &mut MinibatchSchedule,
    vr: Option<&VarianceReductionState>,
) -> Result<ParamVector> {
    let batch = schedule.next_batch();
    stochastic_grad_on_batch(target, params, &batch, vr)
}
