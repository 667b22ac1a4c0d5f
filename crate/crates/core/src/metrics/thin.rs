use super::kernel::energy_kernel;
use crate::error::{invalid, Result};
use crate::par;

/// Candidates whose scores differ by less than this (relative) are treated as
/// tied, so exact ties resolve to the lowest index despite rounding.
const TIE_TOLERANCE: f64 = 1e-12;

/// `MMD²` between the empirical measure of `samples` and that of the
/// (possibly repeated) points `selected`, under the energy kernel.
pub fn thinning_objective<P: AsRef<[f64]> + Sync>(samples: &[P], selected: &[usize]) -> f64 {
    let t = samples.len() as f64;
    let s = selected.len() as f64;
    let k = |i: usize, j: usize| energy_kernel(samples[i].as_ref(), samples[j].as_ref());
    let mut pp = 0.0;
    for i in 0..samples.len() {
        for j in 0..samples.len() {
            pp += k(i, j);
        }
    }
    let mut qq = 0.0;
    for &i in selected {
        for &j in selected {
            qq += k(i, j);
        }
    }
    let mut pq = 0.0;
    for &i in selected {
        for j in 0..samples.len() {
            pq += k(i, j);
        }
    }
    pp / (t * t) + qq / (s * s) - 2.0 * pq / (t * s)
}

/// Greedy MMD minimisation: picks `m` indices one at a time, each time the
/// candidate whose addition minimises the MMD between the selection and the
/// full sample. Indices may repeat. Ties go to the lowest index.
///
/// With `m` equal to the sample size the identity selection is returned,
/// which already attains MMD zero.
pub fn mmd_thin<P: AsRef<[f64]> + Sync>(samples: &[P], m: usize) -> Result<Vec<usize>> {
    let t = samples.len();
    if m == 0 || m > t {
        return Err(invalid(format!("cannot thin {t} points to {m}")));
    }
    if m == t {
        return Ok((0..t).collect());
    }
    let kern = |i: usize, j: usize| energy_kernel(samples[i].as_ref(), samples[j].as_ref());
    // M_j = Σ_t k(j, t); S_j = Σ_{selected a} k(j, a); D_j = k(j, j).
    let row_sums = par::map_range(t, |j| (0..t).map(|i| kern(j, i)).sum::<f64>());
    let diag: Vec<f64> = (0..t).map(|j| kern(j, j)).collect();
    let mut cross = vec![0.0; t];
    let mut chosen = Vec::with_capacity(m);
    for i in 0..m {
        let n_sel = (i + 1) as f64;
        let score = |j: usize| (2.0 * cross[j] + diag[j]) / (n_sel * n_sel) - 2.0 * row_sums[j] / (t as f64 * n_sel);
        let mut best = 0;
        let mut best_score = score(0);
        for j in 1..t {
            let score = score(j);
            if score < best_score - TIE_TOLERANCE * best_score.abs().max(1.0) {
                best_score = score;
                best = j;
            }
        }
        chosen.push(best);
        let column = par::map_range(t, |j| kern(j, best));
        for (c, k) in cross.iter_mut().zip(column) {
            *c += k;
        }
    }
    Ok(chosen)
}
