use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::ParamVector;

/// Ordered parameter draws from one sampler run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub samples: Vec<ParamVector>,
    pub algorithm: String,
    /// Hyperparameter name/value pairs, in a fixed order.
    pub hyperparameters: Vec<(String, f64)>,
    pub seed: u64,
}

impl SampleSet {
    pub fn new(samples: Vec<ParamVector>, algorithm: impl Into<String>, seed: u64) -> Result<Self> {
        if let Some(first) = samples.first() {
            let d = first.len();
            if samples.iter().any(|s| s.len() != d) {
                return Err(invalid("all samples of a set must share one dimension"));
            }
        }
        Ok(Self {
            samples,
            algorithm: algorithm.into(),
            hyperparameters: Vec::new(),
            seed,
        })
    }

    pub fn with_hyper(mut self, name: &str, value: f64) -> Self {
        self.hyperparameters.push((name.to_string(), value));
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.len())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for s in &self.samples {
            for (a, b) in m.iter_mut().zip(s.iter()) {
                *a += b;
            }
        }
        let n = self.samples.len().max(1) as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Per-coordinate sample variance (denominator `n − 1`).
    pub fn variance(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut v = vec![0.0; self.dim()];
        for s in &self.samples {
            for ((acc, x), m) in v.iter_mut().zip(s.iter()).zip(&mean) {
                *acc += (x - m) * (x - m);
            }
        }
        let denom = (self.samples.len().saturating_sub(1)).max(1) as f64;
        v.iter_mut().for_each(|x| *x /= denom);
        v
    }
}
