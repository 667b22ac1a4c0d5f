use nalgebra::{DMatrix, DVector};

use super::target::Target;
use crate::error::{invalid, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Bayesian linear regression `y = φ(x)ᵀβ + ε`, `β ~ N(0, I)`, `ε ~ N(0, σ²)`.
///
/// The posterior is Gaussian and known in closed form, which makes this the
/// reference target for checking samplers and coverage computations.
#[derive(Clone, Debug)]
pub struct BayesianLinearModel {
    features: Vec<f64>,
    targets: Vec<f64>,
    dim: usize,
    noise_sigma: f64,
    fingerprint: u64,
}

impl BayesianLinearModel {
    /// `features` holds one row `φ(x_i)` per observation.
    pub fn new(features: &[Vec<f64>], targets: &[f64], noise_sigma: f64) -> Result<Self> {
        if features.is_empty() || features.len() != targets.len() {
            return Err(invalid("need as many (≥ 1) feature rows as targets"));
        }
        let dim = features[0].len();
        if dim == 0 || features.iter().any(|r| r.len() != dim) {
            return Err(invalid("feature rows must share a positive length"));
        }
        if !(noise_sigma > 0.0) {
            return Err(invalid("noise sigma must be positive"));
        }
        let flat = features.concat();
        let mut fp = crate::rng::mix64(dim as u64 ^ noise_sigma.to_bits());
        for v in flat.iter().chain(targets) {
            fp = crate::rng::mix64(fp ^ v.to_bits());
        }
        Ok(Self {
            features: flat,
            targets: targets.to_vec(),
            dim,
            noise_sigma,
            fingerprint: fp,
        })
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    fn each(&self, batch: Option<&[usize]>, mut f: impl FnMut(usize)) {
        match batch {
            Some(b) => b.iter().for_each(|&i| f(i)),
            None => (0..self.targets.len()).for_each(f),
        }
    }

    /// Posterior precision `ΦᵀΦ/σ² + I`.
    fn precision(&self) -> DMatrix<f64> {
        let n = self.targets.len();
        let phi = DMatrix::from_row_slice(n, self.dim, &self.features);
        phi.transpose() * &phi / (self.noise_sigma * self.noise_sigma) + DMatrix::identity(self.dim, self.dim)
    }

    /// Closed-form posterior mean and covariance.
    pub fn analytic_posterior(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.targets.len();
        let phi = DMatrix::from_row_slice(n, self.dim, &self.features);
        let y = DVector::from_column_slice(&self.targets);
        let chol = self.precision().cholesky().expect("ΦᵀΦ/σ² + I is positive definite");
        let rhs = phi.transpose() * y / (self.noise_sigma * self.noise_sigma);
        let mean = chol.solve(&rhs);
        let cov = chol.inverse();
        let cov_rows = (0..self.dim)
            .map(|i| (0..self.dim).map(|j| cov[(i, j)]).collect())
            .collect();
        (mean.iter().copied().collect(), cov_rows)
    }
}

impl Target for BayesianLinearModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_data(&self) -> usize {
        self.targets.len()
    }

    fn neg_log_likelihood(&self, params: &[f64], batch: Option<&[usize]>) -> f64 {
        let inv_var = 1.0 / (self.noise_sigma * self.noise_sigma);
        let c = 0.5 * (LN_2PI + 2.0 * self.noise_sigma.ln());
        let mut total = 0.0;
        self.each(batch, |i| {
            let pred: f64 = self.row(i).iter().zip(params).map(|(a, b)| a * b).sum();
            let r = pred - self.targets[i];
            total += 0.5 * r * r * inv_var + c;
        });
        total
    }

    fn add_neg_log_likelihood_grad(&self, params: &[f64], batch: Option<&[usize]>, grad: &mut [f64]) {
        let inv_var = 1.0 / (self.noise_sigma * self.noise_sigma);
        self.each(batch, |i| {
            let row = self.row(i);
            let pred: f64 = row.iter().zip(params).map(|(a, b)| a * b).sum();
            let r = (pred - self.targets[i]) * inv_var;
            for (g, a) in grad.iter_mut().zip(row) {
                *g += r * a;
            }
        });
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}
