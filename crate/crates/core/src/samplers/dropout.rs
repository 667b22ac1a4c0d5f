//! MC-dropout with inverted Bernoulli masks on the hidden-layer outputs,
//! active during training and prediction.
//!
//! Since ReLU commutes with non-negative scaling, masking output feature `o`
//! of layer `l` is the same as scaling row `o` of `W_l` and `b_l[o]`. Each
//! stochastic forward pass is therefore returned as an effective weight
//! vector, so that dropout draws can be compared with other samplers in
//! weight space.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::SampleSet;
use crate::error::{invalid, Error, Result};
use crate::model::mlp::Workspace;
use crate::model::train::{prior_draw, Adam};
use crate::model::{MinibatchSchedule, MlpArchitecture, OptConfig, ParamVector, PosteriorSpec};
use crate::rng::{child_rng, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutConfig {
    /// Drop probability `p`.
    pub rate: f64,
    pub n_samples: usize,
    pub opt: OptConfig,
    pub seed: u64,
}

/// One mask per hidden layer, entries `0` or `1/(1−p)`.
pub fn draw_masks(arch: &MlpArchitecture, rate: f64, rng: &mut Rng) -> Vec<Vec<f64>> {
    let sizes = arch.layer_sizes();
    let keep = 1.0 / (1.0 - rate);
    sizes[1..sizes.len() - 1]
        .iter()
        .map(|&w| {
            (0..w)
                .map(|_| {
                    if rate > 0.0 && rng.random::<f64>() < rate {
                        0.0
                    } else {
                        keep
                    }
                })
                .collect()
        })
        .collect()
}

/// Folds hidden-layer masks into the weights that produce those features.
pub fn apply_masks(arch: &MlpArchitecture, params: &[f64], masks: &[Vec<f64>]) -> ParamVector {
    let mut out = params.to_vec();
    for (shape, mask) in arch.layers().iter().zip(masks) {
        for (o, &m) in mask.iter().enumerate() {
            let row = shape.weight_offset + o * shape.fan_in;
            out[row..row + shape.fan_in].iter_mut().for_each(|w| *w *= m);
            out[shape.bias_offset + o] *= m;
        }
    }
    ParamVector(out)
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(invalid(format!("dropout rate must lie in [0, 1), got {rate}")))
    }
}

/// Trains the network with Adam, drawing fresh masks for every data point of
/// every step, from a prior draw seeded by `opt.init_seed`.
pub fn train_with_dropout(posterior: &PosteriorSpec, rate: f64, opt: &OptConfig, seed: u64) -> Result<ParamVector> {
    check_rate(rate)?;
    let arch = posterior.arch();
    let data = posterior.dataset();
    let n = data.len();
    let d = arch.parameter_count();
    let batch_size = opt.batch_size.unwrap_or(n).min(n);
    let mut schedule = MinibatchSchedule::with_rng(batch_size, n, child_rng(seed, &[1]))?;
    let mut rng = child_rng(seed, &[2]);
    let mut params = prior_draw(d, &mut crate::rng::rng_from_seed(opt.init_seed));
    let mut adam = Adam::new(d, opt);
    let mut ws = Workspace::new(arch);
    let inv_var = 1.0 / posterior.noise_sigma().powi(2);
    let mut grad = vec![0.0; d];
    let mut lik_grad = vec![0.0; d];
    let mut resid = vec![0.0; arch.output_dim()];
    for k in 0..opt.iterations {
        let batch = schedule.next_batch();
        lik_grad.iter_mut().for_each(|g| *g = 0.0);
        for &i in &batch {
            let masks = draw_masks(arch, rate, &mut rng);
            let out = ws.forward(&params, data.input(i), Some(&masks));
            for ((r, o), y) in resid.iter_mut().zip(out).zip(data.target(i)) {
                *r = (o - y) * inv_var;
            }
            ws.backward(&params, &resid, Some(&masks), &mut lik_grad);
        }
        let scale = n as f64 / batch.len() as f64;
        for j in 0..d {
            grad[j] = scale * lik_grad[j] + params[j];
        }
        adam.step(&mut params, &grad, opt.learning_rate(k));
        if !params.is_finite() {
            return Err(Error::Divergence {
                iteration: k,
                reason: "non-finite dropout training iterate".into(),
            });
        }
    }
    Ok(params)
}

/// Trains with dropout, then returns `n` masked copies of the trained weights.
pub fn mc_dropout_sample(posterior: &PosteriorSpec, config: &DropoutConfig) -> Result<SampleSet> {
    check_rate(config.rate)?;
    let trained = train_with_dropout(posterior, config.rate, &config.opt, config.seed)?;
    let arch = posterior.arch();
    let mut rng = child_rng(config.seed, &[3]);
    let samples = (0..config.n_samples)
        .map(|_| apply_masks(arch, &trained, &draw_masks(arch, config.rate, &mut rng)))
        .collect();
    Ok(SampleSet::new(samples, "mc_dropout", config.seed)?
        .with_hyper("dropout_rate", config.rate)
        .with_hyper("learning_rate", config.opt.lr_initial))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mlp, RegressionDataset};
    use crate::rng::rng_from_seed;

    fn arch() -> MlpArchitecture {
        MlpArchitecture::new(vec![1, 8, 8, 1]).unwrap()
    }

    #[test]
    fn zero_rate_is_deterministic() {
        let a = arch();
        let mut rng = rng_from_seed(1);
        let w = prior_draw(a.parameter_count(), &mut rng);
        for _ in 0..5 {
            let masked = apply_masks(&a, &w, &draw_masks(&a, 0.0, &mut rng));
            assert_eq!(masked, w);
        }
    }

    #[test]
    fn keep_fraction_matches_rate() {
        let a = arch();
        let p = 0.3;
        let mut rng = rng_from_seed(2);
        let (mut kept, mut total) = (0usize, 0usize);
        for _ in 0..10_000 {
            for m in draw_masks(&a, p, &mut rng) {
                kept += m.iter().filter(|&&v| v > 0.0).count();
                total += m.len();
            }
        }
        let frac = kept as f64 / total as f64;
        let sd = (p * (1.0 - p) / total as f64).sqrt();
        assert!((frac - (1.0 - p)).abs() < 3.0 * sd, "keep fraction {frac}");
    }

    #[test]
    fn inverted_scaling_preserves_expected_preactivation() {
        let a = MlpArchitecture::new(vec![1, 6, 1]).unwrap();
        let mut rng = rng_from_seed(3);
        let w = prior_draw(a.parameter_count(), &mut rng);
        let x = [0.7];
        let plain = mlp::forward(&a, &w, &x).unwrap()[0];
        let n = 10_000;
        let mean = (0..n)
            .map(|_| {
                let masked = apply_masks(&a, &w, &draw_masks(&a, 0.4, &mut rng));
                mlp::forward(&a, &masked, &x).unwrap()[0]
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - plain).abs() < 0.01 * plain.abs().max(1.0), "{mean} vs {plain}");
    }

    #[test]
    fn masked_weights_reproduce_masked_forward() {
        let a = arch();
        let mut rng = rng_from_seed(4);
        let w = prior_draw(a.parameter_count(), &mut rng);
        let masks = draw_masks(&a, 0.5, &mut rng);
        let mut ws = Workspace::new(&a);
        let direct = ws.forward(&w, &[0.2], Some(&masks))[0];
        let folded = mlp::forward(&a, &apply_masks(&a, &w, &masks), &[0.2]).unwrap()[0];
        assert!((direct - folded).abs() < 1e-12);
    }

    #[test]
    fn rate_of_one_is_rejected() {
        let data = RegressionDataset::from_xy(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
        let post = PosteriorSpec::new(arch(), data, 0.1).unwrap();
        let cfg = DropoutConfig {
            rate: 1.0,
            n_samples: 3,
            opt: OptConfig::default(),
            seed: 0,
        };
        assert!(mc_dropout_sample(&post, &cfg).is_err());
    }

    #[test]
    fn training_fits_a_line() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 / 15.0 - 1.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let post = PosteriorSpec::new(arch(), RegressionDataset::from_xy(&xs, &ys).unwrap(), 0.1).unwrap();
        let opt = OptConfig {
            iterations: 2_000,
            ..OptConfig::default()
        };
        let cfg = DropoutConfig {
            rate: 0.1,
            n_samples: 200,
            opt,
            seed: 5,
        };
        let set = mc_dropout_sample(&post, &cfg).unwrap();
        let mean_at = |x: f64| {
            set.samples
                .iter()
                .map(|w| mlp::forward(post.arch(), w, &[x]).unwrap()[0])
                .sum::<f64>()
                / set.len() as f64
        };
        assert!((mean_at(0.5) - 1.0).abs() < 0.2);
        assert!((mean_at(-0.5) + 1.0).abs() < 0.2);
    }
}
