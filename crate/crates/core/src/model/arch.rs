use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};

/// Layer widths of a fully connected network, input first and output last.
///
/// Hidden layers use ReLU, the output layer is linear.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct MlpArchitecture {
    layer_sizes: Vec<usize>,
}

/// Where one dense layer lives inside a flat [`ParamVector`].
///
/// Parameters are laid out layer by layer in forward order; within a layer the
/// `fan_out × fan_in` weight matrix comes first (row-major, one row per output
/// unit), followed by the `fan_out` biases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerShape {
    pub fn end(&self) -> usize {
        self.bias_offset + self.fan_out
    }
}

impl MlpArchitecture {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return Err(invalid(format!(
                "an architecture needs input, at least one hidden layer and output; got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(invalid(format!("layer widths must be positive: {layer_sizes:?}")));
        }
        Ok(Self { layer_sizes })
    }

    /// Convenience constructor: `input`, hidden widths, `output`.
    pub fn with_hidden(input: usize, hidden: &[usize], output: usize) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::new(sizes)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of weight layers (hidden layers + 1).
    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn max_width(&self) -> usize {
        self.layer_sizes.iter().copied().max().unwrap()
    }

    /// Σ over layers of `(fan_in + 1) · fan_out`.
    pub fn parameter_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let shape = LayerShape {
                    fan_in: w[0],
                    fan_out: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset = shape.end();
                shape
            })
            .collect()
    }

    pub fn check_params(&self, params: &[f64]) -> Result<()> {
        check_len("parameter vector", self.parameter_count(), params.len())
    }
}

impl TryFrom<Vec<usize>> for MlpArchitecture {
    type Error = crate::Error;

    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Self::new(sizes)
    }
}

impl From<MlpArchitecture> for Vec<usize> {
    fn from(arch: MlpArchitecture) -> Self {
        arch.layer_sizes
    }
}

/// Flat vector of every weight and bias of a network.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// One dense layer in matrix form.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// `fan_out × fan_in`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl MlpArchitecture {
    pub fn unflatten(&self, params: &[f64]) -> Result<Vec<DenseLayer>> {
        self.check_params(params)?;
        Ok(self
            .layers()
            .iter()
            .map(|l| DenseLayer {
                weights: params[l.weight_offset..l.bias_offset].to_vec(),
                bias: params[l.bias_offset..l.end()].to_vec(),
            })
            .collect())
    }

    pub fn flatten(&self, layers: &[DenseLayer]) -> Result<ParamVector> {
        let shapes = self.layers();
        check_len("layer list", shapes.len(), layers.len())?;
        let mut out = Vec::with_capacity(self.parameter_count());
        for (shape, layer) in shapes.iter().zip(layers) {
            check_len("layer weights", shape.fan_in * shape.fan_out, layer.weights.len())?;
            check_len("layer bias", shape.fan_out, layer.bias.len())?;
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        Ok(ParamVector(out))
    }
}
