use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datasets::{Af2Latent, TaskId, TaskSpec};
use crate::error::{invalid, Result};
use crate::model::{MlpArchitecture, OptConfig};
use crate::samplers::{LossScale, StepSizeTuning};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

impl FromStr for Scale {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(invalid(format!("unknown scale {other:?}, expected desk or paper"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Sgld,
    SgldCv,
    SgldSvrg,
    Csgld,
    Sghmc,
    SghmcCv,
    SghmcSvrg,
    Csghmc,
    Psgld,
    Swag,
    DeepEnsemble,
    McDropout,
}

impl Algorithm {
    pub const ALL: [Algorithm; 12] = [
        Algorithm::Sgld,
        Algorithm::SgldCv,
        Algorithm::SgldSvrg,
        Algorithm::Csgld,
        Algorithm::Sghmc,
        Algorithm::SghmcCv,
        Algorithm::SghmcSvrg,
        Algorithm::Csghmc,
        Algorithm::Psgld,
        Algorithm::Swag,
        Algorithm::DeepEnsemble,
        Algorithm::McDropout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Sgld => "sgld",
            Algorithm::SgldCv => "sgld-cv",
            Algorithm::SgldSvrg => "sgld-svrg",
            Algorithm::Csgld => "csgld",
            Algorithm::Sghmc => "sghmc",
            Algorithm::SghmcCv => "sghmc-cv",
            Algorithm::SghmcSvrg => "sghmc-svrg",
            Algorithm::Csghmc => "csghmc",
            Algorithm::Psgld => "psgld",
            Algorithm::Swag => "swag",
            Algorithm::DeepEnsemble => "deep-ensemble",
            Algorithm::McDropout => "mc-dropout",
        }
    }

    pub fn is_cyclical(self) -> bool {
        matches!(self, Algorithm::Csgld | Algorithm::Csghmc)
    }

    pub fn needs_map(self) -> bool {
        matches!(
            self,
            Algorithm::SgldCv | Algorithm::SgldSvrg | Algorithm::SghmcCv | Algorithm::SghmcSvrg | Algorithm::Swag
        )
    }

    /// Step-size grid from the reference hyperparameter table: ten
    /// log-spaced values per algorithm family.
    pub fn default_steps(self) -> Vec<f64> {
        let (lo, hi) = match self {
            Algorithm::Sgld | Algorithm::SgldCv | Algorithm::SgldSvrg | Algorithm::Csgld => (1e-8, 1e-5),
            Algorithm::Sghmc | Algorithm::SghmcCv | Algorithm::SghmcSvrg | Algorithm::Csghmc => (1e-8, 1e-6),
            Algorithm::Psgld | Algorithm::DeepEnsemble | Algorithm::McDropout => (1e-4, 1e-1),
            Algorithm::Swag => (1e-7, 1e-5),
        };
        log_space(lo, hi, 10)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown algorithm {s:?}")))
    }
}

/// `n` values from `lo` to `hi`, equally spaced in log scale.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// One algorithm and its hyperparameter grid. Cells are the Cartesian
/// product of step sizes with cycle counts (cyclical samplers) or dropout
/// rates (MC-dropout).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmGrid {
    pub algorithm: Algorithm,
    /// Step sizes, or learning rates for the Adam-trained methods.
    pub step_sizes: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cycles: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropout_rates: Vec<f64>,
}

impl AlgorithmGrid {
    pub fn standard(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            step_sizes: algorithm.default_steps(),
            cycles: if algorithm.is_cyclical() {
                vec![10, 100, 1000]
            } else {
                vec![]
            },
            dropout_rates: if algorithm == Algorithm::McDropout {
                vec![0.1, 0.2, 0.3, 0.4, 0.5]
            } else {
                vec![]
            },
        }
    }

    /// Cells in a fixed order: outer loop over the second hyperparameter,
    /// inner loop over step sizes.
    pub fn cells(&self) -> Vec<Cell> {
        let seconds: Vec<(Option<usize>, Option<f64>)> = if self.algorithm.is_cyclical() {
            self.cycles.iter().map(|&c| (Some(c), None)).collect()
        } else if self.algorithm == Algorithm::McDropout {
            self.dropout_rates.iter().map(|&r| (None, Some(r))).collect()
        } else {
            vec![(None, None)]
        };
        let mut cells = Vec::new();
        for (cycles, dropout_rate) in seconds {
            for &step_size in &self.step_sizes {
                cells.push(Cell {
                    algorithm: self.algorithm,
                    hyper_index: cells.len(),
                    step_size,
                    cycles,
                    dropout_rate,
                });
            }
        }
        cells
    }

    fn validate(&self) -> Result<()> {
        let name = self.algorithm;
        if self.step_sizes.is_empty() || self.step_sizes.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(invalid(format!(
                "{name}: step sizes must be a non-empty list of positive values"
            )));
        }
        if self.algorithm.is_cyclical() && (self.cycles.is_empty() || self.cycles.contains(&0)) {
            return Err(invalid(format!(
                "{name}: needs a non-empty list of positive cycle counts"
            )));
        }
        if self.algorithm == Algorithm::McDropout
            && (self.dropout_rates.is_empty() || self.dropout_rates.iter().any(|&p| !(p > 0.0 && p < 1.0)))
        {
            return Err(invalid(format!("{name}: dropout rates must lie in (0, 1)")));
        }
        Ok(())
    }
}

/// One hyperparameter setting of one algorithm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub algorithm: Algorithm,
    /// Position in the algorithm's cell list.
    pub hyper_index: usize,
    pub step_size: f64,
    pub cycles: Option<usize>,
    pub dropout_rate: Option<f64>,
}

impl Cell {
    /// `algorithm[(second hyperparameter)]@step`, unique within a task.
    pub fn label(&self) -> String {
        let mut s = self.algorithm.as_str().to_string();
        if let Some(c) = self.cycles {
            s.push_str(&format!("({c})"));
        }
        if let Some(p) = self.dropout_rate {
            s.push_str(&format!("({p})"));
        }
        format!("{s}@{:e}", self.step_size)
    }
}

/// What the predictive bands and Q² are scored against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoverageTarget {
    /// Noiseless `f(x*)`, with bands built from function draws alone.
    #[default]
    Latent,
    /// Noisy `y*`, with bands including the observation noise.
    Observed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgmcmcSettings {
    pub iterations: usize,
    /// The first `burn_in_fraction · iterations` iterates are discarded.
    pub burn_in_fraction: f64,
    pub batch_size: usize,
    pub store_stride: usize,
    pub thin_target: usize,
    pub svrg_period: usize,
    /// Starting point of the samplers without a control variate; the CV and
    /// SVRG variants always start at their anchor.
    #[serde(default)]
    pub init: ChainInit,
}

/// Where an SG-MCMC chain starts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainInit {
    /// A draw from the `N(0, I)` prior, like an ensemble member.
    #[default]
    Prior,
    Map,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmcSettings {
    pub leapfrog_steps: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub n_chains: usize,
    /// Starting point of the step-size bisection.
    pub initial_step_size: f64,
    pub tuning: StepSizeTuning,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSettings {
    pub members: usize,
    /// Adam settings of each member; the learning rate comes from the grid.
    pub opt: OptConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwagSettings {
    pub iterations: usize,
    pub rank: usize,
    pub n_samples: usize,
    pub loss_scale: LossScale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutSettings {
    pub n_samples: usize,
    pub opt: OptConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scale: Scale,
    pub seed: u64,
    pub tasks: Vec<TaskId>,
    /// Hidden widths for every task; `None` uses each task's reference
    /// architecture.
    pub hidden_layers: Option<Vec<usize>>,
    pub af2_latent: Af2Latent,
    pub n_replicates: usize,
    pub algorithms: Vec<AlgorithmGrid>,
    /// Coverage levels `1 − α` for the coverage curves.
    pub levels: Vec<f64>,
    /// Level used for PICP, MCP and CCP in the result tables.
    pub primary_level: f64,
    pub coverage_target: CoverageTarget,
    /// Noise draws per function draw when scoring observed targets.
    pub noise_draws: usize,
    pub map: OptConfig,
    pub hmc: HmcSettings,
    pub sgmcmc: SgmcmcSettings,
    pub swag: SwagSettings,
    pub ensemble: EnsembleSettings,
    pub dropout: DropoutSettings,
    /// Points drawn for the median-heuristic IMQ lengthscale.
    pub lengthscale_subsample: usize,
    /// Points kept per cell for the pairwise discrepancy matrices.
    pub matrix_points: usize,
    /// Dimensions of the similarity embedding.
    pub mds_dim: usize,
    /// Default `None` uses every available core.
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

fn merge_json(base: &mut serde_json::Value, overrides: serde_json::Value) {
    match (base, overrides) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn coverage_levels() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

impl ExperimentConfig {
    /// Workstation-sized run on the first task: hidden widths 20, 2·10⁴
    /// SGMCMC iterations, 500 retained particles, 50 ensemble members and 20
    /// training-set replicates.
    pub fn desk() -> Self {
        let map = OptConfig::default();
        Self {
            scale: Scale::Desk,
            seed: 0,
            tasks: vec![TaskId::Af1],
            hidden_layers: Some(vec![20, 20]),
            af2_latent: Af2Latent::Cubic,
            n_replicates: 20,
            algorithms: Algorithm::ALL.into_iter().map(AlgorithmGrid::standard).collect(),
            levels: coverage_levels(),
            primary_level: 0.95,
            coverage_target: CoverageTarget::Latent,
            noise_draws: 20,
            map: map.clone(),
            hmc: HmcSettings {
                leapfrog_steps: 100,
                iterations: 200,
                burn_in: 100,
                n_chains: 3,
                initial_step_size: 1e-2,
                tuning: StepSizeTuning {
                    min_acceptance: 0.85,
                    max_acceptance: 0.95,
                    pilot_iterations: 50,
                    max_rounds: 30,
                },
            },
            sgmcmc: SgmcmcSettings {
                iterations: 20_000,
                burn_in_fraction: 0.5,
                batch_size: 10,
                store_stride: 10,
                thin_target: 500,
                svrg_period: 100,
                init: ChainInit::Prior,
            },
            swag: SwagSettings {
                iterations: 2_000,
                rank: 20,
                n_samples: 500,
                loss_scale: LossScale::PerDatum,
            },
            ensemble: EnsembleSettings {
                members: 50,
                opt: OptConfig {
                    iterations: 1_000,
                    ..map.clone()
                },
            },
            dropout: DropoutSettings {
                n_samples: 500,
                opt: map,
            },
            lengthscale_subsample: 1_000,
            matrix_points: 200,
            mds_dim: 2,
            workers: None,
        }
    }

    /// The reference protocol: all four tasks with their reference
    /// architectures, 500 replicates, 10⁵ SGMCMC iterations thinned to 2,000
    /// particles, 200 ensemble members and 10⁴ HMC leapfrog steps.
    pub fn paper() -> Self {
        let desk = Self::desk();
        Self {
            scale: Scale::Paper,
            tasks: TaskId::ALL.to_vec(),
            hidden_layers: None,
            n_replicates: 500,
            hmc: HmcSettings {
                leapfrog_steps: 10_000,
                tuning: StepSizeTuning {
                    pilot_iterations: 20,
                    ..desk.hmc.tuning.clone()
                },
                initial_step_size: 1e-3,
                ..desk.hmc
            },
            sgmcmc: SgmcmcSettings {
                iterations: 100_000,
                store_stride: 1,
                thin_target: 2_000,
                ..desk.sgmcmc
            },
            swag: SwagSettings {
                iterations: 10_000,
                n_samples: 2_000,
                ..desk.swag
            },
            ensemble: EnsembleSettings {
                members: 200,
                opt: desk.map.clone(),
            },
            dropout: DropoutSettings {
                n_samples: 2_000,
                ..desk.dropout
            },
            matrix_points: 500,
            ..desk
        }
    }

    pub fn preset(scale: Scale) -> Self {
        match scale {
            Scale::Desk => Self::desk(),
            Scale::Paper => Self::paper(),
        }
    }

    /// Parses a JSON config layered over a preset: objects merge key by key
    /// and every other value replaces the preset's. The preset is the
    /// document's `scale` field if present, else `default_scale`.
    pub fn from_json_str(text: &str, default_scale: Scale) -> Result<Self> {
        let overrides: serde_json::Value = serde_json::from_str(text)?;
        let scale = match overrides.get("scale") {
            Some(v) => serde_json::from_value(v.clone())?,
            None => default_scale,
        };
        let mut merged = serde_json::to_value(Self::preset(scale))?;
        merge_json(&mut merged, overrides);
        let cfg: Self = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path, default_scale: Scale) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?, default_scale)
    }

    pub fn task_spec(&self, id: TaskId) -> TaskSpec {
        TaskSpec {
            af2_latent: self.af2_latent,
            ..TaskSpec::standard(id)
        }
    }

    pub fn architecture(&self, id: TaskId) -> Result<MlpArchitecture> {
        let hidden = match &self.hidden_layers {
            Some(h) => h.clone(),
            None => match id {
                TaskId::Af1 => vec![100, 100],
                TaskId::Af2 | TaskId::Af3 => vec![50, 50],
                TaskId::Af4 => vec![100, 100, 100],
            },
        };
        MlpArchitecture::with_hidden(1, &hidden, 1)
    }

    pub fn burn_in(&self) -> usize {
        (self.sgmcmc.iterations as f64 * self.sgmcmc.burn_in_fraction).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() || self.n_replicates == 0 {
            return Err(invalid("a benchmark needs at least one task and one replicate"));
        }
        if self.algorithms.is_empty() {
            return Err(invalid("a benchmark needs at least one algorithm"));
        }
        for (i, grid) in self.algorithms.iter().enumerate() {
            grid.validate()?;
            if self.algorithms[..i].iter().any(|g| g.algorithm == grid.algorithm) {
                return Err(invalid(format!("{} is listed twice", grid.algorithm)));
            }
        }
        if self.levels.is_empty() || self.levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return Err(invalid("coverage levels must lie in (0, 1)"));
        }
        if !self.levels.iter().any(|&l| (l - self.primary_level).abs() < 1e-12) {
            return Err(invalid("the primary level must be one of the coverage levels"));
        }
        if !(0.0..1.0).contains(&self.sgmcmc.burn_in_fraction) {
            return Err(invalid("the burn-in fraction must lie in [0, 1)"));
        }
        if self.sgmcmc.store_stride == 0 || self.sgmcmc.thin_target == 0 || self.sgmcmc.batch_size == 0 {
            return Err(invalid("stride, thin target and batch size must be positive"));
        }
        let stored = (self.sgmcmc.iterations - self.burn_in()) / self.sgmcmc.store_stride;
        if self.sgmcmc.thin_target > stored {
            return Err(invalid(format!(
                "thin target {} exceeds the {stored} stored SG-MCMC samples",
                self.sgmcmc.thin_target
            )));
        }
        if self.ensemble.members == 0 || self.swag.n_samples == 0 || self.dropout.n_samples == 0 {
            return Err(invalid("sample counts must be positive"));
        }
        if self.matrix_points < 2 || self.lengthscale_subsample < 2 || self.mds_dim == 0 {
            return Err(invalid(
                "matrix points and lengthscale subsample need at least 2 points",
            ));
        }
        if self.coverage_target == CoverageTarget::Observed && self.noise_draws == 0 {
            return Err(invalid("scoring observed targets needs at least one noise draw"));
        }
        if self.hidden_layers.as_ref().is_some_and(|h| h.contains(&0)) {
            return Err(invalid("hidden widths must be positive"));
        }
        Ok(())
    }
}
