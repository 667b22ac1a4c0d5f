use super::kernel::{ImqNorm, KernelKind, KernelSpec};
use crate::error::{invalid, Error, Result};
use crate::model::{grad_potential, Target};
use crate::par;

/// Score `s_p(w) = ∇ log p(w | data) = −∇U(w)` of a target posterior.
pub trait ScoreOracle: Sync {
    fn score(&self, w: &[f64]) -> Vec<f64>;
}

impl<F: Fn(&[f64]) -> Vec<f64> + Sync> ScoreOracle for F {
    fn score(&self, w: &[f64]) -> Vec<f64> {
        self(w)
    }
}

/// Score of a [`Target`], as the negated potential gradient.
pub struct PosteriorScore<'a, T: ?Sized>(pub &'a T);

impl<T: Target + ?Sized> ScoreOracle for PosteriorScore<'_, T> {
    fn score(&self, w: &[f64]) -> Vec<f64> {
        match grad_potential(self.0, w) {
            Ok(g) => g.iter().map(|x| -x).collect(),
            Err(_) => vec![f64::NAN; w.len()],
        }
    }
}

/// Langevin–Stein kernel of the squared IMQ base kernel, given the scores
/// `sa = s_p(a)` and `sb = s_p(b)`:
/// `⟨∇_a, ∇_b k⟩ + ⟨s_p(a), ∇_b k⟩ + ⟨s_p(b), ∇_a k⟩ + ⟨s_p(a), s_p(b)⟩ k`.
pub fn stein_kernel(a: &[f64], b: &[f64], sa: &[f64], sb: &[f64], lengthscale: f64) -> f64 {
    let l2 = lengthscale * lengthscale;
    let d = a.len() as f64;
    let mut r2 = 0.0;
    let mut sa_delta = 0.0;
    let mut sb_delta = 0.0;
    let mut sa_sb = 0.0;
    for i in 0..a.len() {
        let delta = a[i] - b[i];
        r2 += delta * delta;
        sa_delta += sa[i] * delta;
        sb_delta += sb[i] * delta;
        sa_sb += sa[i] * sb[i];
    }
    let u = 1.0 + r2 / l2;
    let k = u.powf(-0.5);
    let u32 = k / u;
    let trace = d * u32 / l2 - 3.0 * u32 / u * r2 / (l2 * l2);
    // ∇_b k = u^(−3/2)(a − b)/ℓ² and ∇_a k = −∇_b k.
    trace + u32 / l2 * (sa_delta - sb_delta) + sa_sb * k
}

fn require_squared_imq(kernel: &KernelSpec) -> Result<()> {
    kernel.validate()?;
    if kernel.kind != KernelKind::Imq || kernel.imq_norm != ImqNorm::Squared {
        return Err(invalid("the Stein kernel is built on the squared-distance IMQ kernel"));
    }
    Ok(())
}

pub fn stein_kernel_with<S: ScoreOracle + ?Sized>(a: &[f64], b: &[f64], kernel: &KernelSpec, score: &S) -> Result<f64> {
    require_squared_imq(kernel)?;
    Ok(stein_kernel(a, b, &score.score(a), &score.score(b), kernel.lengthscale))
}

/// Kernelized Stein discrepancy (V-statistic, clamped at zero).
pub fn ksd<P, S>(samples: &[P], score: &S, kernel: &KernelSpec) -> Result<f64>
where
    P: AsRef<[f64]> + Sync,
    S: ScoreOracle + ?Sized,
{
    require_squared_imq(kernel)?;
    if samples.is_empty() {
        return Err(invalid("KSD needs a non-empty sample"));
    }
    let scores = par::map_slice(samples, |w| score.score(w.as_ref()));
    if let Some(index) = scores.iter().position(|s| s.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFiniteScore { index });
    }
    let n = samples.len();
    let l = kernel.lengthscale;
    let rows = par::map_range(n, |i| {
        let a = samples[i].as_ref();
        (0..n)
            .map(|j| stein_kernel(a, samples[j].as_ref(), &scores[i], &scores[j], l))
            .sum::<f64>()
    });
    let v = rows.iter().sum::<f64>() / (n * n) as f64;
    Ok(v.max(0.0).sqrt())
}
