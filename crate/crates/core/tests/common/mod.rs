//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use bnnbench_core::model::{MlpArchitecture, PosteriorSpec, RegressionDataset, Target};
use bnnbench_core::rng::{rng_from_seed, std_normal, Rng};
use rand::Rng as _;

/// Dense forward pass written directly from the layer layout
/// (row-major `fan_out × fan_in` weights, then bias), independent of the
/// library's workspace code.
pub fn oracle_forward(sizes: &[usize], params: &[f64], x: &[f64]) -> Vec<f64> {
    oracle_forward_with_margin(sizes, params, x).0
}

/// Forward pass plus the smallest `|pre-activation|` over hidden units.
pub fn oracle_forward_with_margin(sizes: &[usize], params: &[f64], x: &[f64]) -> (Vec<f64>, f64) {
    let mut h = x.to_vec();
    let mut offset = 0;
    let mut margin = f64::INFINITY;
    for l in 0..sizes.len() - 1 {
        let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
        let w = &params[offset..offset + fan_in * fan_out];
        let b = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        offset += fan_in * fan_out + fan_out;
        let hidden = l + 2 < sizes.len();
        let mut next = vec![0.0; fan_out];
        for o in 0..fan_out {
            let mut z = b[o];
            for i in 0..fan_in {
                z += w[o * fan_in + i] * h[i];
            }
            if hidden {
                margin = margin.min(z.abs());
            }
            next[o] = if hidden { z.max(0.0) } else { z };
        }
        h = next;
    }
    (h, margin)
}

/// `−log p(Y|X,w) − log p(w)` summed point by point from Gaussian densities.
pub fn oracle_potential(sizes: &[usize], data: &RegressionDataset, sigma: f64, params: &[f64]) -> f64 {
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut u = 0.0;
    for i in 0..data.len() {
        let f = oracle_forward(sizes, params, data.input(i));
        for (fk, yk) in f.iter().zip(data.target(i)) {
            let r = yk - fk;
            u += 0.5 * r * r / (sigma * sigma) + 0.5 * (ln_2pi + 2.0 * sigma.ln());
        }
    }
    for w in params {
        u += 0.5 * w * w + 0.5 * ln_2pi;
    }
    u
}

/// Central finite-difference gradient of the potential.
pub fn fd_gradient<T: Target>(target: &T, params: &[f64], h: f64) -> Vec<f64> {
    let mut w = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = w[i];
            w[i] = orig + h;
            let up = bnnbench_core::model::potential(target, &w).unwrap();
            w[i] = orig - h;
            let down = bnnbench_core::model::potential(target, &w).unwrap();
            w[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn gaussian_vec(n: usize, scale: f64, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| scale * std_normal(rng)).collect()
}

/// Random regression problem with `n` points for `arch`.
pub fn random_posterior(arch: &MlpArchitecture, n: usize, seed: u64) -> PosteriorSpec {
    let mut rng = rng_from_seed(seed);
    let d_in = arch.input_dim();
    let d_out = arch.output_dim();
    let inputs: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vec(d_in, 1.5, &mut rng)).collect();
    let targets: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vec(d_out, 1.0, &mut rng)).collect();
    let sigma = rng.random_range(0.1..1.0);
    PosteriorSpec::new(
        arch.clone(),
        RegressionDataset::from_rows(&inputs, &targets).unwrap(),
        sigma,
    )
    .unwrap()
}

/// `‖a − b‖ / ‖b‖`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

/// Gradient-oracle sweep: worst relative error over `cases` random
/// (parameters, dataset) pairs. Parameters that put a hidden unit within
/// `KINK_MARGIN` of its ReLU kink on some datum are redrawn, since a central
/// difference straddling the kink does not estimate the derivative.
pub fn worst_fd_error(arch: &MlpArchitecture, cases: u64, seed: u64) -> f64 {
    const KINK_MARGIN: f64 = 1e-3;
    let sizes = arch.layer_sizes();
    (0..cases)
        .map(|c| {
            let post = random_posterior(arch, 8, seed.wrapping_add(c));
            let data = post.dataset();
            let mut rng = rng_from_seed(seed ^ (c + 1000));
            let w = loop {
                let w = gaussian_vec(arch.parameter_count(), 0.7, &mut rng);
                let margin = (0..data.len())
                    .map(|i| oracle_forward_with_margin(sizes, &w, data.input(i)).1)
                    .fold(f64::INFINITY, f64::min);
                if margin > KINK_MARGIN {
                    break w;
                }
            };
            let g = bnnbench_core::model::grad_potential(&post, &w).unwrap();
            relative_error(&fd_gradient(&post, &w, 1e-5), &g)
        })
        .fold(0.0, f64::max)
}
