use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// `N` input/target pairs stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionDataset {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    input_dim: usize,
    output_dim: usize,
}

impl RegressionDataset {
    pub fn from_rows(inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Self> {
        if inputs.is_empty() {
            return Err(invalid("a dataset needs at least one observation"));
        }
        if inputs.len() != targets.len() {
            return Err(invalid(format!(
                "{} input rows but {} target rows",
                inputs.len(),
                targets.len()
            )));
        }
        let input_dim = inputs[0].len();
        let output_dim = targets[0].len();
        if input_dim == 0 || output_dim == 0 {
            return Err(invalid("input and output dimensions must be positive"));
        }
        if inputs.iter().any(|r| r.len() != input_dim) || targets.iter().any(|r| r.len() != output_dim) {
            return Err(invalid("ragged dataset rows"));
        }
        Ok(Self {
            inputs: inputs.concat(),
            targets: targets.concat(),
            input_dim,
            output_dim,
        })
    }

    /// Scalar-input, scalar-output dataset.
    pub fn from_xy(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(invalid(format!(
                "need equally many (≥ 1) inputs and targets, got {} and {}",
                xs.len(),
                ys.len()
            )));
        }
        Ok(Self {
            inputs: xs.to_vec(),
            targets: ys.to_vec(),
            input_dim: 1,
            output_dim: 1,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.output_dim..(i + 1) * self.output_dim]
    }

    pub fn inputs_flat(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets_flat(&self) -> &[f64] {
        &self.targets
    }

    /// Union of two datasets with matching dimensions.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.input_dim != other.input_dim || self.output_dim != other.output_dim {
            return Err(invalid("cannot concatenate datasets of different dimensions"));
        }
        let mut out = self.clone();
        out.inputs.extend_from_slice(&other.inputs);
        out.targets.extend_from_slice(&other.targets);
        Ok(out)
    }

    pub(crate) fn fingerprint(&self) -> u64 {
        let mut h = crate::rng::mix64(self.input_dim as u64 ^ ((self.output_dim as u64) << 32));
        for v in self.inputs.iter().chain(&self.targets) {
            h = crate::rng::mix64(h ^ v.to_bits());
        }
        h
    }
}
