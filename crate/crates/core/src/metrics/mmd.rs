use rand::seq::index::sample as sample_indices;

use super::kernel::{euclidean, KernelKind, KernelSpec};
use crate::error::{invalid, Result};
use crate::par;
use crate::rng::rng_from_seed;

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_sets<P: AsRef<[f64]>>(a: &[P], b: &[P]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("MMD needs two non-empty samples"));
    }
    let d = a[0].as_ref().len();
    if a.iter().chain(b).any(|p| p.as_ref().len() != d) {
        return Err(invalid("MMD samples must share one dimension"));
    }
    Ok(())
}

/// `(1/(|a||b|)) Σᵢ Σⱼ f(aᵢ, bⱼ)`. Rows are summed independently and then
/// added in index order, so the result does not depend on the thread count.
fn pair_mean<P, F>(a: &[P], b: &[P], f: F) -> f64
where
    P: AsRef<[f64]> + Sync,
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    let rows = par::map_range(a.len(), |i| {
        let x = a[i].as_ref();
        b.iter().map(|y| f(x, y.as_ref())).sum::<f64>()
    });
    rows.iter().sum::<f64>() / (a.len() * b.len()) as f64
}

/// V-statistic mean of `kernel` over all pairs of `a × b`.
pub fn mean_kernel<P: AsRef<[f64]> + Sync>(a: &[P], b: &[P], kernel: &KernelSpec) -> f64 {
    match kernel.kind {
        KernelKind::Energy => {
            let mean_norm = |s: &[P]| s.iter().map(|p| norm(p.as_ref())).sum::<f64>() / s.len() as f64;
            mean_norm(a) + mean_norm(b) - pair_mean(a, b, euclidean)
        }
        KernelKind::Imq => pair_mean(a, b, |x, y| kernel.eval(x, y)),
    }
}

/// Biased (V-statistic) squared MMD, clamped at zero.
pub fn mmd_squared_with<P: AsRef<[f64]> + Sync>(a: &[P], b: &[P], kernel: &KernelSpec) -> Result<f64> {
    check_sets(a, b)?;
    kernel.validate()?;
    let v = mean_kernel(a, a, kernel) + mean_kernel(b, b, kernel) - 2.0 * mean_kernel(a, b, kernel);
    Ok(v.max(0.0))
}

pub fn mmd_with<P: AsRef<[f64]> + Sync>(a: &[P], b: &[P], kernel: &KernelSpec) -> Result<f64> {
    mmd_squared_with(a, b, kernel).map(f64::sqrt)
}

/// MMD under the energy kernel; works for weight vectors and for prediction
/// vectors alike.
pub fn mmd<P: AsRef<[f64]> + Sync>(a: &[P], b: &[P]) -> Result<f64> {
    mmd_with(a, b, &KernelSpec::energy())
}

/// Median pairwise Euclidean distance over a random subsample of at most
/// `subsample` points (all points if fewer).
pub fn median_heuristic<P: AsRef<[f64]> + Sync>(points: &[P], subsample: usize, seed: u64) -> Result<f64> {
    if points.len() < 2 || subsample < 2 {
        return Err(invalid("the median heuristic needs at least two points"));
    }
    let chosen: Vec<&[f64]> = if points.len() > subsample {
        let mut idx = sample_indices(&mut rng_from_seed(seed), points.len(), subsample).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| points[i].as_ref()).collect()
    } else {
        points.iter().map(|p| p.as_ref()).collect()
    };
    let rows = par::map_range(chosen.len(), |i| {
        (i + 1..chosen.len())
            .map(|j| euclidean(chosen[i], chosen[j]))
            .collect::<Vec<f64>>()
    });
    let mut dists: Vec<f64> = rows.into_iter().flatten().collect();
    dists.sort_by(f64::total_cmp);
    let n = dists.len();
    Ok(if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    })
}
