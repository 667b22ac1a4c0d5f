use super::arch::MlpArchitecture;
use super::dataset::RegressionDataset;
use super::mlp::Workspace;
use super::target::Target;
use crate::error::{check_len, invalid, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Gaussian-likelihood regression posterior of a ReLU network with a
/// `N(0, I)` prior on every parameter and known homoscedastic noise `σ`.
///
/// `−log p(Y_i | X_i, w) = ‖Y_i − f(X_i; w)‖² / (2σ²) + (M/2)·log(2πσ²)`.
#[derive(Clone, Debug)]
pub struct PosteriorSpec {
    arch: MlpArchitecture,
    dataset: RegressionDataset,
    noise_sigma: f64,
    fingerprint: u64,
}

impl PosteriorSpec {
    pub fn new(arch: MlpArchitecture, dataset: RegressionDataset, noise_sigma: f64) -> Result<Self> {
        if !(noise_sigma > 0.0 && noise_sigma.is_finite()) {
            return Err(invalid(format!("noise sigma must be positive, got {noise_sigma}")));
        }
        check_len("dataset input dimension", arch.input_dim(), dataset.input_dim())?;
        check_len("dataset output dimension", arch.output_dim(), dataset.output_dim())?;
        let fingerprint = crate::rng::mix64(dataset.fingerprint() ^ noise_sigma.to_bits())
            ^ crate::rng::mix64(arch.parameter_count() as u64);
        Ok(Self {
            arch,
            dataset,
            noise_sigma,
            fingerprint,
        })
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn dataset(&self) -> &RegressionDataset {
        &self.dataset
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    fn point_constant(&self) -> f64 {
        0.5 * self.arch.output_dim() as f64 * (LN_2PI + 2.0 * self.noise_sigma.ln())
    }

    fn for_each_index(&self, batch: Option<&[usize]>, mut f: impl FnMut(usize)) {
        match batch {
            Some(idx) => idx.iter().for_each(|&i| f(i)),
            None => (0..self.dataset.len()).for_each(f),
        }
    }

    fn nll_impl(&self, params: &[f64], batch: Option<&[usize]>, mut grad: Option<&mut [f64]>) -> f64 {
        let mut ws = Workspace::new(&self.arch);
        let inv_var = 1.0 / (self.noise_sigma * self.noise_sigma);
        let m = self.arch.output_dim();
        let mut resid = vec![0.0; m];
        let mut total = 0.0;
        let mut count = 0usize;
        self.for_each_index(batch, |i| {
            let out = ws.forward(params, self.dataset.input(i), None);
            let y = self.dataset.target(i);
            let mut sq = 0.0;
            for k in 0..m {
                let r = out[k] - y[k];
                sq += r * r;
                resid[k] = r * inv_var;
            }
            total += 0.5 * sq * inv_var;
            count += 1;
            if let Some(g) = grad.as_deref_mut() {
                ws.backward(params, &resid, None, g);
            }
        });
        total + count as f64 * self.point_constant()
    }
}

impl Target for PosteriorSpec {
    fn dim(&self) -> usize {
        self.arch.parameter_count()
    }

    fn n_data(&self) -> usize {
        self.dataset.len()
    }

    fn neg_log_likelihood(&self, params: &[f64], batch: Option<&[usize]>) -> f64 {
        self.nll_impl(params, batch, None)
    }

    fn add_neg_log_likelihood_grad(&self, params: &[f64], batch: Option<&[usize]>, grad: &mut [f64]) {
        self.nll_impl(params, batch, Some(grad));
    }

    fn neg_log_likelihood_and_grad(&self, params: &[f64], batch: Option<&[usize]>, grad: &mut [f64]) -> f64 {
        self.nll_impl(params, batch, Some(grad))
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}
