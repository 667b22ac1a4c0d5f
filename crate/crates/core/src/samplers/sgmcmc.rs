//! Stochastic-gradient MCMC: SGLD, SGHMC, their control-variate, SVRG and
//! cyclical variants, and RMSprop-preconditioned SGLD.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SampleSet;
use crate::error::{check_len, invalid, Error, Result};
use crate::metrics::mmd_thin;
use crate::model::{stochastic_grad, MinibatchSchedule, ParamVector, Target, VarianceReductionState};
use crate::rng::{child_rng, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SghmcParams {
    /// Updates per sampler iteration.
    pub leapfrog_steps: usize,
    /// `α` in `v ← (1 − α)v − ε∇̂U + √(2αε)ξ`.
    pub friction: f64,
    /// The momentum is redrawn every this many updates.
    pub resample_period: usize,
}

impl Default for SghmcParams {
    fn default() -> Self {
        Self {
            leapfrog_steps: 10,
            friction: 0.1,
            resample_period: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsgldParams {
    /// `λ` in `D = diag(λ + √L)⁻¹`.
    pub lambda: f64,
    /// Moving-average weight `α` of the squared-gradient accumulator.
    pub decay: f64,
}

impl Default for PsgldParams {
    fn default() -> Self {
        Self {
            lambda: 1e-5,
            decay: 0.99,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Plain,
    /// Control variate anchored at the MAP for the whole run.
    ControlVariate,
    /// Control variate re-anchored at the current state every `period` iterations.
    Svrg {
        period: usize,
    },
    Cyclical {
        cycles: usize,
    },
    Preconditioned(PsgldParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    Langevin,
    Hamiltonian(SghmcParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub step_size: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub variant: Variant,
    pub dynamics: Dynamics,
    pub batch_size: usize,
    /// Size of the MMD-thinned output; `None` keeps every retained iterate.
    pub thin_target: Option<usize>,
    /// Keep every `store_stride`-th post-burn-in iterate before thinning.
    pub store_stride: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn sgld(step_size: f64, iterations: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            step_size,
            iterations,
            burn_in: iterations / 2,
            variant: Variant::Plain,
            dynamics: Dynamics::Langevin,
            batch_size,
            thin_target: None,
            store_stride: 1,
            seed,
        }
    }

    pub fn sghmc(step_size: f64, iterations: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            dynamics: Dynamics::Hamiltonian(SghmcParams::default()),
            ..Self::sgld(step_size, iterations, batch_size, seed)
        }
    }

    /// Step size at iteration `k` (1-based).
    pub fn step_at(&self, k: usize) -> f64 {
        match self.variant {
            Variant::Cyclical { cycles } => cyclical_step_size(k, self.step_size, self.iterations, cycles),
            _ => self.step_size,
        }
    }

    /// Number of iterates kept after burn-in, before thinning.
    pub fn retained_count(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in) / self.store_stride.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(invalid(format!("step size must be positive, got {}", self.step_size)));
        }
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(invalid(format!(
                "burn-in {} must be smaller than the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if self.store_stride == 0 || self.batch_size == 0 {
            return Err(invalid("store stride and batch size must be positive"));
        }
        match (self.variant, self.dynamics) {
            (Variant::Preconditioned(_), Dynamics::Hamiltonian(_)) => {
                return Err(invalid("preconditioning is only defined for Langevin dynamics"))
            }
            (Variant::Cyclical { cycles: 0 }, _) | (Variant::Svrg { period: 0 }, _) => {
                return Err(invalid("cycle count and re-anchoring period must be positive"))
            }
            _ => {}
        }
        if let Dynamics::Hamiltonian(p) = self.dynamics {
            if p.leapfrog_steps == 0 || p.resample_period == 0 || !(0.0..=1.0).contains(&p.friction) {
                return Err(invalid("SGHMC needs positive step counts and friction in [0, 1]"));
            }
        }
        if let Some(m) = self.thin_target {
            let retained = self.retained_count();
            if m == 0 || m > retained {
                return Err(invalid(format!(
                    "thin target {m} is unreachable with {retained} retained iterates"
                )));
            }
        }
        Ok(())
    }
}

/// `ε_k = (ε₀/2)·(cos(π·mod(k−1, ⌈K/M⌉)/⌈K/M⌉) + 1)` for `1 ≤ k ≤ K`.
pub fn cyclical_step_size(k: usize, eps0: f64, total_iterations: usize, cycles: usize) -> f64 {
    let period = total_iterations.div_ceil(cycles.max(1)).max(1);
    let phase = ((k.max(1) - 1) % period) as f64 / period as f64;
    0.5 * eps0 * ((std::f64::consts::PI * phase).cos() + 1.0)
}

/// State of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub position: ParamVector,
    /// SGHMC only.
    pub momentum: Option<ParamVector>,
    /// pSGLD only.
    pub accumulator: Option<ParamVector>,
    /// Completed sampler iterations.
    pub iteration: usize,
    /// Completed SGHMC updates, for momentum resampling.
    pub updates: usize,
}

impl ChainState {
    pub fn new(position: ParamVector, config: &SamplerConfig) -> Self {
        let d = position.len();
        Self {
            momentum: matches!(config.dynamics, Dynamics::Hamiltonian(_)).then(|| ParamVector::zeros(d)),
            accumulator: matches!(config.variant, Variant::Preconditioned(_)).then(|| ParamVector::zeros(d)),
            position,
            iteration: 0,
            updates: 0,
        }
    }

    fn check_finite(&self) -> Result<()> {
        if self.position.is_finite() && self.momentum.as_ref().is_none_or(|m| m.is_finite()) {
            Ok(())
        } else {
            Err(Error::Divergence {
                iteration: self.iteration,
                reason: "non-finite chain state".into(),
            })
        }
    }
}

/// `w ← w − ε·g + √(2ε)·ξ`.
pub fn sgld_update(position: &mut [f64], grad: &[f64], step: f64, noise: &[f64]) {
    let scale = (2.0 * step).sqrt();
    for i in 0..position.len() {
        position[i] += -step * grad[i] + scale * noise[i];
    }
}

/// `w ← w + v`, then `v ← (1 − α)v − ε·g + √(2αε)·ξ` with `g` taken at the old `w`.
pub fn sghmc_update(position: &mut [f64], momentum: &mut [f64], grad: &[f64], step: f64, friction: f64, noise: &[f64]) {
    let scale = (2.0 * friction * step).sqrt();
    for i in 0..position.len() {
        position[i] += momentum[i];
        momentum[i] = (1.0 - friction) * momentum[i] - step * grad[i] + scale * noise[i];
    }
}

/// `L ← αL + (1 − α)g∘g`, `D = 1/(λ + √L)`, `w ← w − εD∘g + √(2εD)∘ξ`.
///
/// The accumulator absorbs the current gradient before `D` is formed.
pub fn psgld_update(
    position: &mut [f64],
    accumulator: &mut [f64],
    grad: &[f64],
    step: f64,
    params: &PsgldParams,
    noise: &[f64],
) {
    for i in 0..position.len() {
        let g = grad[i];
        accumulator[i] = params.decay * accumulator[i] + (1.0 - params.decay) * g * g;
        let d = 1.0 / (params.lambda + accumulator[i].sqrt());
        position[i] += -step * d * g + (2.0 * step * d).sqrt() * noise[i];
    }
}

fn gaussian(dim: usize, rng: &mut Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// One SGLD iteration (constant or cyclical step).
pub fn sgld_step<T: Target + ?Sized>(
    state: &mut ChainState,
    target: &T,
    config: &SamplerConfig,
    schedule: &mut MinibatchSchedule,
    vr: Option<&VarianceReductionState>,
    rng: &mut Rng,
) -> Result<()> {
    let step = config.step_at(state.iteration + 1);
    let g = stochastic_grad(target, &state.position, schedule, vr)?;
    let noise = gaussian(g.len(), rng);
    sgld_update(&mut state.position, &g, step, &noise);
    state.iteration += 1;
    state.check_finite()
}

/// One SGHMC iteration: `leapfrog_steps` updates, each on a fresh mini-batch,
/// with `v ~ N(0, ε·I)` redrawn every `resample_period` updates.
pub fn sghmc_step<T: Target + ?Sized>(
    state: &mut ChainState,
    target: &T,
    config: &SamplerConfig,
    schedule: &mut MinibatchSchedule,
    vr: Option<&VarianceReductionState>,
    rng: &mut Rng,
) -> Result<()> {
    let Dynamics::Hamiltonian(params) = config.dynamics else {
        return Err(invalid("sghmc_step needs Hamiltonian dynamics"));
    };
    let step = config.step_at(state.iteration + 1);
    let d = state.position.len();
    let momentum = state.momentum.get_or_insert_with(|| ParamVector::zeros(d));
    for _ in 0..params.leapfrog_steps {
        if state.updates.is_multiple_of(params.resample_period) {
            let sd = step.sqrt();
            momentum
                .iter_mut()
                .for_each(|v| *v = sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng));
        }
        let g = stochastic_grad(target, &state.position, schedule, vr)?;
        let noise = gaussian(d, rng);
        sghmc_update(&mut state.position, momentum, &g, step, params.friction, &noise);
        state.updates += 1;
    }
    state.iteration += 1;
    state.check_finite()
}

/// One pSGLD iteration.
pub fn psgld_step<T: Target + ?Sized>(
    state: &mut ChainState,
    target: &T,
    config: &SamplerConfig,
    schedule: &mut MinibatchSchedule,
    rng: &mut Rng,
) -> Result<()> {
    let Variant::Preconditioned(params) = config.variant else {
        return Err(invalid("psgld_step needs the preconditioned variant"));
    };
    let step = config.step_at(state.iteration + 1);
    let g = stochastic_grad(target, &state.position, schedule, None)?;
    let noise = gaussian(g.len(), rng);
    let d = g.len();
    let acc = state.accumulator.get_or_insert_with(|| ParamVector::zeros(d));
    psgld_update(&mut state.position, acc, &g, step, &params, &noise);
    state.iteration += 1;
    state.check_finite()
}

/// Dispatches one iteration to the step function matching `config`.
pub fn advance<T: Target + ?Sized>(
    state: &mut ChainState,
    target: &T,
    config: &SamplerConfig,
    schedule: &mut MinibatchSchedule,
    vr: Option<&VarianceReductionState>,
    rng: &mut Rng,
) -> Result<()> {
    match (config.dynamics, config.variant) {
        (_, Variant::Preconditioned(_)) => psgld_step(state, target, config, schedule, rng),
        (Dynamics::Langevin, _) => sgld_step(state, target, config, schedule, vr, rng),
        (Dynamics::Hamiltonian(_), _) => sghmc_step(state, target, config, schedule, vr, rng),
    }
}

/// Runs a chain from `init` for `config.iterations` iterations, drops the
/// burn-in, keeps every `store_stride`-th iterate and MMD-thins the result to
/// `thin_target` particles.
///
/// `map` is the control-variate anchor, required by the CV and SVRG variants.
pub fn run_sgmcmc<T: Target + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    init: &ParamVector,
    map: Option<&ParamVector>,
) -> Result<SampleSet> {
    config.validate()?;
    check_len("initial point", target.dim(), init.len())?;
    let mut schedule = MinibatchSchedule::with_rng(config.batch_size, target.n_data(), child_rng(config.seed, &[1]))?;
    let mut rng = child_rng(config.seed, &[2]);
    let mut vr = match config.variant {
        Variant::ControlVariate | Variant::Svrg { .. } => {
            let anchor = map.ok_or_else(|| invalid("control-variate variants need a MAP anchor"))?;
            let period = match config.variant {
                Variant::Svrg { period } => Some(period),
                _ => None,
            };
            Some(VarianceReductionState::new(target, anchor.clone(), period)?)
        }
        _ => None,
    };
    let mut state = ChainState::new(init.clone(), config);
    let mut retained = Vec::with_capacity(config.retained_count());
    let stride = config.store_stride;
    for k in 0..config.iterations {
        if let Some(v) = vr.as_mut() {
            v.maybe_reanchor(target, k, &state.position)?;
        }
        advance(&mut state, target, config, &mut schedule, vr.as_ref(), &mut rng)?;
        let done = k + 1;
        if done > config.burn_in && (done - config.burn_in).is_multiple_of(stride) {
            retained.push(state.position.clone());
        }
    }
    let samples = match config.thin_target {
        Some(m) if m < retained.len() => mmd_thin(&retained, m)?
            .into_iter()
            .map(|i| retained[i].clone())
            .collect(),
        _ => retained,
    };
    let mut set =
        SampleSet::new(samples, variant_label(config), config.seed)?.with_hyper("step_size", config.step_size);
    if let Variant::Cyclical { cycles } = config.variant {
        set = set.with_hyper("cycles", cycles as f64);
    }
    Ok(set)
}

fn variant_label(config: &SamplerConfig) -> String {
    let base = match config.dynamics {
        Dynamics::Langevin => "sgld",
        Dynamics::Hamiltonian(_) => "sghmc",
    };
    match config.variant {
        Variant::Plain => base.to_string(),
        Variant::ControlVariate => format!("{base}-cv"),
        Variant::Svrg { .. } => format!("{base}-svrg"),
        Variant::Cyclical { .. } => format!("c{base}"),
        Variant::Preconditioned(_) => "psgld".to_string(),
    }
}
