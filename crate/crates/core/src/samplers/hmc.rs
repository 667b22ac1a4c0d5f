//! Full-batch Hamiltonian Monte Carlo with a leapfrog integrator, unit mass
//! matrix and a Metropolis–Hastings correction on `H(w, v) = U(w) + ½‖v‖²`.
//!
//! This is the reference sampler every other approximation is compared to.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SampleSet;
use crate::error::{check_len, invalid, Result};
use crate::model::target::potential_and_grad;
use crate::model::{ParamVector, Target};
use crate::par;
use crate::rng::{child_rng, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmcConfig {
    pub step_size: f64,
    pub leapfrog_steps: usize,
    /// Iterations per chain, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub n_chains: usize,
    pub seed: u64,
    /// Mean acceptance below this is flagged in [`HmcRun::below_floor`].
    pub acceptance_floor: f64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            leapfrog_steps: 10_000,
            iterations: 200,
            burn_in: 100,
            n_chains: 3,
            seed: 0,
            acceptance_floor: 0.8,
        }
    }
}

impl HmcConfig {
    fn validate(&self) -> Result<()> {
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(invalid("HMC step size must be finite and non-negative"));
        }
        if self.leapfrog_steps == 0 || self.n_chains == 0 {
            return Err(invalid("HMC needs at least one leapfrog step and one chain"));
        }
        if self.burn_in >= self.iterations {
            return Err(invalid(format!(
                "burn-in {} must be smaller than the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct HmcRun {
    /// Post-burn-in positions of every chain, chain by chain.
    pub samples: SampleSet,
    /// Mean Metropolis acceptance probability over all iterations and chains.
    pub acceptance_rate: f64,
    pub chain_acceptance: Vec<f64>,
    /// Proposals rejected because the Hamiltonian was not finite.
    pub non_finite_rejections: usize,
    pub below_floor: bool,
}

/// Integrates `n_steps` leapfrog steps in place. `grad` must hold `∇U(position)`
/// on entry and holds `∇U` at the final position on exit. Returns the final
/// potential, or `None` as soon as a non-finite value shows up.
pub fn leapfrog<T: Target + ?Sized>(
    target: &T,
    position: &mut [f64],
    momentum: &mut [f64],
    grad: &mut [f64],
    step_size: f64,
    n_steps: usize,
) -> Option<f64> {
    let mut u = f64::NAN;
    for (p, g) in momentum.iter_mut().zip(grad.iter()) {
        *p -= 0.5 * step_size * g;
    }
    for l in 0..n_steps {
        for (w, p) in position.iter_mut().zip(momentum.iter()) {
            *w += step_size * p;
        }
        u = potential_and_grad(target, position, grad);
        if !u.is_finite() {
            return None;
        }
        let scale = if l + 1 == n_steps { 0.5 } else { 1.0 };
        for (p, g) in momentum.iter_mut().zip(grad.iter()) {
            *p -= scale * step_size * g;
        }
    }
    if momentum.iter().all(|p| p.is_finite()) {
        Some(u)
    } else {
        None
    }
}

fn kinetic(momentum: &[f64]) -> f64 {
    0.5 * momentum.iter().map(|p| p * p).sum::<f64>()
}

struct ChainOutput {
    samples: Vec<ParamVector>,
    acceptance: f64,
    non_finite: usize,
}

fn run_chain<T: Target + ?Sized>(
    target: &T,
    init: &[f64],
    step_size: f64,
    leapfrog_steps: usize,
    iterations: usize,
    burn_in: usize,
    rng: &mut Rng,
) -> ChainOutput {
    let d = init.len();
    let mut position = init.to_vec();
    let mut grad = vec![0.0; d];
    let mut u = potential_and_grad(target, &position, &mut grad);
    let mut prop = vec![0.0; d];
    let mut prop_grad = vec![0.0; d];
    let mut momentum = vec![0.0; d];
    let mut acc_sum = 0.0;
    let mut non_finite = 0;
    let mut samples = Vec::with_capacity(iterations - burn_in);
    for it in 0..iterations {
        momentum.iter_mut().for_each(|p| *p = StandardNormal.sample(rng));
        let h0 = u + kinetic(&momentum);
        prop.copy_from_slice(&position);
        prop_grad.copy_from_slice(&grad);
        let accept_prob = match leapfrog(
            target,
            &mut prop,
            &mut momentum,
            &mut prop_grad,
            step_size,
            leapfrog_steps,
        ) {
            Some(u_new) => {
                let h1 = u_new + kinetic(&momentum);
                if h1.is_finite() && h0.is_finite() {
                    let a = (h0 - h1).exp().min(1.0);
                    if rng.random::<f64>() < a {
                        position.copy_from_slice(&prop);
                        grad.copy_from_slice(&prop_grad);
                        u = u_new;
                    }
                    a
                } else {
                    non_finite += 1;
                    0.0
                }
            }
            None => {
                non_finite += 1;
                0.0
            }
        };
        acc_sum += accept_prob;
        if it >= burn_in {
            samples.push(ParamVector(position.clone()));
        }
    }
    ChainOutput {
        samples,
        acceptance: acc_sum / iterations as f64,
        non_finite,
    }
}

/// Runs `cfg.n_chains` independent chains; chain `c` starts at `inits[c]`.
pub fn hmc_run<T: Target + ?Sized>(target: &T, cfg: &HmcConfig, inits: &[ParamVector]) -> Result<HmcRun> {
    cfg.validate()?;
    if inits.len() < cfg.n_chains {
        return Err(invalid(format!(
            "{} chains requested but {} initial points given",
            cfg.n_chains,
            inits.len()
        )));
    }
    for init in &inits[..cfg.n_chains] {
        check_len("HMC initial point", target.dim(), init.len())?;
    }
    let chains = par::map_range(cfg.n_chains, |c| {
        let mut rng = child_rng(cfg.seed, &[c as u64]);
        run_chain(
            target,
            &inits[c],
            cfg.step_size,
            cfg.leapfrog_steps,
            cfg.iterations,
            cfg.burn_in,
            &mut rng,
        )
    });
    let chain_acceptance: Vec<f64> = chains.iter().map(|c| c.acceptance).collect();
    let acceptance_rate = chain_acceptance.iter().sum::<f64>() / chain_acceptance.len() as f64;
    let non_finite_rejections = chains.iter().map(|c| c.non_finite).sum();
    let below_floor = acceptance_rate < cfg.acceptance_floor;
    if below_floor {
        log::warn!(
            "HMC acceptance rate {acceptance_rate:.3} is below the floor {:.2}",
            cfg.acceptance_floor
        );
    }
    let samples = chains.into_iter().flat_map(|c| c.samples).collect();
    let samples = SampleSet::new(samples, "hmc", cfg.seed)?
        .with_hyper("step_size", cfg.step_size)
        .with_hyper("leapfrog_steps", cfg.leapfrog_steps as f64);
    Ok(HmcRun {
        samples,
        acceptance_rate,
        chain_acceptance,
        non_finite_rejections,
        below_floor,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepSizeTuning {
    /// Accepted band for the pilot acceptance rate.
    pub min_acceptance: f64,
    pub max_acceptance: f64,
    pub pilot_iterations: usize,
    pub max_rounds: usize,
}

impl Default for StepSizeTuning {
    fn default() -> Self {
        Self {
            min_acceptance: 0.8,
            max_acceptance: 0.95,
            pilot_iterations: 20,
            max_rounds: 30,
        }
    }
}

/// Bisection (in log space) on the step size until a pilot chain from `init`
/// accepts within `[min_acceptance, max_acceptance]`.
///
/// Returns the step size and its pilot acceptance. When the band is never hit
/// the largest step size whose acceptance reached `min_acceptance` is
/// returned, or the smallest one tried if none did.
pub fn tune_step_size<T: Target + ?Sized>(
    target: &T,
    init: &[f64],
    cfg: &HmcConfig,
    tuning: &StepSizeTuning,
) -> Result<(f64, f64)> {
    check_len("HMC initial point", target.dim(), init.len())?;
    if !(cfg.step_size > 0.0) || tuning.pilot_iterations == 0 {
        return Err(invalid(
            "tuning needs a positive initial step size and pilot iterations",
        ));
    }
    let mut eps = cfg.step_size;
    let mut lo: Option<f64> = None;
    let mut hi: Option<f64> = None;
    let mut best_ok: Option<(f64, f64)> = None;
    let mut smallest = (f64::INFINITY, 0.0);
    for round in 0..tuning.max_rounds.max(1) {
        let mut rng = child_rng(cfg.seed, &[0x7u64, round as u64]);
        let out = run_chain(
            target,
            init,
            eps,
            cfg.leapfrog_steps,
            tuning.pilot_iterations,
            0,
            &mut rng,
        );
        let acc = out.acceptance;
        log::debug!("HMC tuning round {round}: step {eps:.3e} -> acceptance {acc:.3}");
        if eps < smallest.0 {
            smallest = (eps, acc);
        }
        if acc >= tuning.min_acceptance && best_ok.is_none_or(|(e, _)| eps > e) {
            best_ok = Some((eps, acc));
        }
        if acc < tuning.min_acceptance {
            hi = Some(eps);
        } else if acc > tuning.max_acceptance {
            lo = Some(eps);
        } else {
            return Ok((eps, acc));
        }
        eps = match (lo, hi) {
            (Some(l), Some(h)) => (l * h).sqrt(),
            (None, Some(h)) => h / 2.0,
            (Some(l), None) => l * 2.0,
            (None, None) => unreachable!(),
        };
    }
    Ok(best_ok.unwrap_or(smallest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BayesianLinearModel;

    /// Standard normal in `dim` dimensions (the prior alone).
    struct StdNormal(usize);

    impl Target for StdNormal {
        fn dim(&self) -> usize {
            self.0
        }
        fn n_data(&self) -> usize {
            1
        }
        fn neg_log_likelihood(&self, _: &[f64], _: Option<&[usize]>) -> f64 {
            0.0
        }
        fn add_neg_log_likelihood_grad(&self, _: &[f64], _: Option<&[usize]>, _: &mut [f64]) {}
        fn fingerprint(&self) -> u64 {
            self.0 as u64
        }
    }

    #[test]
    fn zero_step_always_accepts() {
        let cfg = HmcConfig {
            step_size: 0.0,
            leapfrog_steps: 5,
            iterations: 50,
            burn_in: 10,
            n_chains: 2,
            seed: 1,
            ..HmcConfig::default()
        };
        let init = vec![ParamVector(vec![0.3, -1.0]); 2];
        let run = hmc_run(&StdNormal(2), &cfg, &init).unwrap();
        assert_eq!(run.acceptance_rate, 1.0);
        assert_eq!(run.samples.len(), 80);
        assert!(run.samples.samples.iter().all(|s| s.0 == vec![0.3, -1.0]));
    }

    #[test]
    fn energy_error_scales_quadratically() {
        // Mean |ΔH| over 100 trajectories of fixed length 2 (20 steps at
        // ε = 0.1). For this target leapfrog conserves p²/2 + (1 − ε²/4)w²/2,
        // so |ΔH| = (ε²/8)|w₁² − w₀²| exactly.
        let target = StdNormal(1);
        let mean_drift = |eps: f64| {
            let mut rng = crate::rng::rng_from_seed(5);
            let mut total = 0.0;
            for _ in 0..100 {
                let mut w = vec![crate::rng::std_normal(&mut rng)];
                let mut p = vec![crate::rng::std_normal(&mut rng)];
                let w0 = w[0];
                let mut g = vec![w[0]];
                let h0 = 0.5 * w[0] * w[0] + 0.5 * p[0] * p[0];
                let steps = (2.0 / eps).round() as usize;
                leapfrog(&target, &mut w, &mut p, &mut g, eps, steps).unwrap();
                let h1 = 0.5 * w[0] * w[0] + 0.5 * p[0] * p[0];
                let exact = eps * eps / 8.0 * (w[0] * w[0] - w0 * w0);
                assert!((h1 - h0 - exact).abs() < 1e-12);
                total += (h1 - h0).abs();
            }
            total / 100.0
        };
        let drifts: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&e| mean_drift(e)).collect();
        for pair in drifts.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!((3.0..5.0).contains(&ratio), "drift ratio {ratio} not ≈ 4: {drifts:?}");
        }
        // |ΔH| ≤ C ε² with one constant across the three step sizes.
        let c = drifts[0] / 0.01;
        assert!(drifts[2] <= 1.5 * c * 0.025 * 0.025);
    }

    #[test]
    fn tuning_hits_the_acceptance_band() {
        let feats: Vec<Vec<f64>> = (0..50).map(|i| vec![1.0, (i as f64 - 25.0) / 10.0]).collect();
        let ys: Vec<f64> = feats.iter().map(|r| 1.0 + 0.5 * r[1]).collect();
        let m = BayesianLinearModel::new(&feats, &ys, 0.2).unwrap();
        let (mean, _) = m.analytic_posterior();
        let cfg = HmcConfig {
            step_size: 0.5,
            leapfrog_steps: 10,
            seed: 3,
            ..HmcConfig::default()
        };
        let tuning = StepSizeTuning {
            pilot_iterations: 100,
            ..StepSizeTuning::default()
        };
        let (eps, acc) = tune_step_size(&m, &mean, &cfg, &tuning).unwrap();
        assert!(eps < 0.5);
        assert!((0.8..=0.95).contains(&acc), "acceptance {acc} at step {eps}");
    }

    #[test]
    fn rejects_bad_configs() {
        let init = vec![ParamVector(vec![0.0])];
        let bad_burn = HmcConfig {
            iterations: 10,
            burn_in: 10,
            n_chains: 1,
            ..HmcConfig::default()
        };
        assert!(hmc_run(&StdNormal(1), &bad_burn, &init).is_err());
        let too_few_inits = HmcConfig {
            n_chains: 2,
            ..HmcConfig::default()
        };
        assert!(hmc_run(&StdNormal(1), &too_few_inits, &init).is_err());
    }
}
