//! Forward and reverse-mode passes of a dense ReLU network over a flat
//! parameter vector.

use super::arch::{LayerShape, MlpArchitecture};
use crate::error::{check_len, Result};

/// Scratch buffers for one forward/backward pass.
///
/// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`
/// (post-ReLU, post-mask for hidden layers, linear for the last one).
#[derive(Clone, Debug)]
pub struct Workspace {
    shapes: Vec<LayerShape>,
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Workspace {
    pub fn new(arch: &MlpArchitecture) -> Self {
        Self {
            shapes: arch.layers(),
            acts: arch.layer_sizes().iter().map(|&w| vec![0.0; w]).collect(),
            delta: vec![0.0; arch.max_width()],
            delta_prev: vec![0.0; arch.max_width()],
        }
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }

    /// Forward pass; `masks[l]` multiplies the output features of hidden layer `l`.
    pub fn forward(&mut self, params: &[f64], x: &[f64], masks: Option<&[Vec<f64>]>) -> &[f64] {
        self.acts[0].copy_from_slice(x);
        let n_layers = self.shapes.len();
        for (l, shape) in self.shapes.iter().enumerate() {
            let (prev, next) = self.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            let w = &params[shape.weight_offset..shape.bias_offset];
            let b = &params[shape.bias_offset..shape.end()];
            for (o, out_o) in out.iter_mut().enumerate() {
                let row = &w[o * shape.fan_in..(o + 1) * shape.fan_in];
                let z = b[o] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>();
                *out_o = z;
            }
            if l + 1 < n_layers {
                for v in out.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                if let Some(m) = masks {
                    for (v, keep) in out.iter_mut().zip(&m[l]) {
                        *v *= keep;
                    }
                }
            }
        }
        self.output()
    }

    /// Accumulates `∂L/∂params` into `grad`, given `∂L/∂output` for the last
    /// forward pass. Must be called with the same params/masks as that pass.
    pub fn backward(&mut self, params: &[f64], d_output: &[f64], masks: Option<&[Vec<f64>]>, grad: &mut [f64]) {
        let n_layers = self.shapes.len();
        let out_dim = self.shapes[n_layers - 1].fan_out;
        self.delta[..out_dim].copy_from_slice(d_output);
        for l in (0..n_layers).rev() {
            let shape = self.shapes[l];
            let input = &self.acts[l];
            let delta = &self.delta[..shape.fan_out];
            let (gw, gb) = grad[shape.weight_offset..shape.end()].split_at_mut(shape.fan_in * shape.fan_out);
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (g, x) in gw[o * shape.fan_in..(o + 1) * shape.fan_in].iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if l == 0 {
                break;
            }
            let w = &params[shape.weight_offset..shape.bias_offset];
            let prev = &mut self.delta_prev[..shape.fan_in];
            prev.iter_mut().for_each(|v| *v = 0.0);
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (p, a) in prev.iter_mut().zip(&w[o * shape.fan_in..(o + 1) * shape.fan_in]) {
                    *p += d * a;
                }
            }
            // Through the ReLU (and mask) of hidden layer l-1.
            for (i, p) in prev.iter_mut().enumerate() {
                if input[i] <= 0.0 {
                    *p = 0.0;
                } else if let Some(m) = masks {
                    *p *= m[l - 1][i];
                }
            }
            std::mem::swap(&mut self.delta, &mut self.delta_prev);
        }
    }
}

/// Network output for a single input.
pub fn forward(arch: &MlpArchitecture, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    arch.check_params(params)?;
    check_len("network input", arch.input_dim(), x.len())?;
    let mut ws = Workspace::new(arch);
    Ok(ws.forward(params, x, None).to_vec())
}

/// Outputs for `n` inputs stored row-major in `inputs` (`n × input_dim`),
/// returned row-major (`n × output_dim`).
pub fn predict_many(arch: &MlpArchitecture, params: &[f64], inputs: &[f64]) -> Result<Vec<f64>> {
    arch.check_params(params)?;
    let d_in = arch.input_dim();
    if !inputs.len().is_multiple_of(d_in) {
        return Err(crate::error::invalid(format!(
            "input buffer of length {} is not a multiple of the input dimension {d_in}",
            inputs.len()
        )));
    }
    let mut ws = Workspace::new(arch);
    let mut out = Vec::with_capacity(inputs.len() / d_in * arch.output_dim());
    for x in inputs.chunks_exact(d_in) {
        out.extend_from_slice(ws.forward(params, x, None));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    /// Plain matrix-multiply forward pass over the unflattened layers.
    fn oracle_forward(arch: &MlpArchitecture, params: &[f64], x: &[f64]) -> Vec<f64> {
        let layers = arch.unflatten(params).unwrap();
        let mut h = x.to_vec();
        let n = layers.len();
        for (l, layer) in layers.iter().enumerate() {
            let fan_in = h.len();
            let fan_out = layer.bias.len();
            let mut z = vec![0.0; fan_out];
            for o in 0..fan_out {
                let mut acc = layer.bias[o];
                for i in 0..fan_in {
                    acc += layer.weights[o * fan_in + i] * h[i];
                }
                z[o] = if l + 1 < n { acc.max(0.0) } else { acc };
            }
            h = z;
        }
        h
    }

    #[test]
    fn zero_params_give_zero_output() {
        let arch = MlpArchitecture::new(vec![3, 5, 4, 2]).unwrap();
        let params = vec![0.0; arch.parameter_count()];
        let y = forward(&arch, &params, &[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn negative_preactivation_is_clamped() {
        // 1 -> 1 -> 1: w1 = 1, b1 = -2 so preactivation at x = 1 is -1.
        let arch = MlpArchitecture::new(vec![1, 1, 1]).unwrap();
        let params = [1.0, -2.0, 5.0, 0.25];
        assert_eq!(forward(&arch, &params, &[1.0]).unwrap(), vec![0.25]);
    }

    #[test]
    fn matches_matrix_oracle() {
        let mut rng = rng_from_seed(11);
        for sizes in [vec![1, 7, 1], vec![3, 5, 6, 2], vec![2, 4, 4, 4, 1]] {
            let arch = MlpArchitecture::new(sizes).unwrap();
            let params: Vec<f64> = (0..arch.parameter_count())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let x: Vec<f64> = (0..arch.input_dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let got = forward(&arch, &params, &x).unwrap();
            let want = oracle_forward(&arch, &params, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "{g} vs {w}");
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let arch = MlpArchitecture::new(vec![2, 3, 1]).unwrap();
        let params = vec![0.0; arch.parameter_count()];
        assert!(forward(&arch, &params[1..], &[0.0, 0.0]).is_err());
        assert!(forward(&arch, &params, &[0.0]).is_err());
        assert!(predict_many(&arch, &params, &[0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn masked_forward_equals_row_scaled_weights() {
        let arch = MlpArchitecture::new(vec![1, 4, 3, 1]).unwrap();
        let mut rng = rng_from_seed(3);
        let params: Vec<f64> = (0..arch.parameter_count())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let masks = vec![vec![2.0, 0.0, 2.0, 2.0], vec![0.0, 2.0, 2.0]];
        let mut ws = Workspace::new(&arch);
        let masked = ws.forward(&params, &[0.7], Some(&masks))[0];
        let mut scaled = params.clone();
        for (l, shape) in arch.layers().iter().take(2).enumerate() {
            for o in 0..shape.fan_out {
                for i in 0..shape.fan_in {
                    scaled[shape.weight_offset + o * shape.fan_in + i] *= masks[l][o];
                }
                scaled[shape.bias_offset + o] *= masks[l][o];
            }
        }
        let direct = forward(&arch, &scaled, &[0.7]).unwrap()[0];
        assert!((masked - direct).abs() < 1e-12);
    }
}
