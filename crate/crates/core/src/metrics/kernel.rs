use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `k(a, b) = ‖a‖ + ‖b‖ − ‖a − b‖`.
    Energy,
    /// Inverse multi-quadric, see [`ImqNorm`].
    Imq,
}

/// How the distance enters the IMQ kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImqNorm {
    /// `(1 + ‖a − b‖²/ℓ²)^(−1/2)`.
    #[default]
    Squared,
    /// `(1 + ‖a − b‖/ℓ)^(−1/2)`.
    Unsquared,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// IMQ only.
    pub lengthscale: f64,
    #[serde(default)]
    pub imq_norm: ImqNorm,
}

impl KernelSpec {
    pub fn energy() -> Self {
        Self {
            kind: KernelKind::Energy,
            lengthscale: 1.0,
            imq_norm: ImqNorm::Squared,
        }
    }

    pub fn imq(lengthscale: f64) -> Self {
        Self {
            kind: KernelKind::Imq,
            lengthscale,
            imq_norm: ImqNorm::Squared,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == KernelKind::Imq && !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(invalid(format!(
                "IMQ lengthscale must be positive, got {}",
                self.lengthscale
            )));
        }
        Ok(())
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match (self.kind, self.imq_norm) {
            (KernelKind::Energy, _) => energy_kernel(a, b),
            (KernelKind::Imq, ImqNorm::Squared) => imq_kernel(a, b, self.lengthscale),
            (KernelKind::Imq, ImqNorm::Unsquared) => (1.0 + euclidean(a, b) / self.lengthscale).powf(-0.5),
        }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn energy_kernel(a: &[f64], b: &[f64]) -> f64 {
    norm(a) + norm(b) - euclidean(a, b)
}

pub fn imq_kernel(a: &[f64], b: &[f64], lengthscale: f64) -> f64 {
    let r2 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    (1.0 + r2 / (lengthscale * lengthscale)).powf(-0.5)
}

/// `∇_a k(a, b) = −(1 + r²/ℓ²)^(−3/2)·(a − b)/ℓ²`.
pub fn imq_grad_first(a: &[f64], b: &[f64], lengthscale: f64) -> Vec<f64> {
    let l2 = lengthscale * lengthscale;
    let r2 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let c = -(1.0 + r2 / l2).powf(-1.5) / l2;
    a.iter().zip(b).map(|(x, y)| c * (x - y)).collect()
}
