//! Posterior approximation algorithms.
//!
//! Every sampler is a sequential computation driven by its own RNG stream;
//! independent chains or ensemble members may run concurrently.

pub mod dropout;
pub mod ensemble;
pub mod hmc;
mod sample_set;
pub mod sgmcmc;
pub mod swag;

pub use dropout::{mc_dropout_sample, DropoutConfig};
pub use ensemble::{deep_ensemble, deep_ensemble_with_seeds, EnsembleOutput};
pub use hmc::{hmc_run, tune_step_size, HmcConfig, HmcRun, StepSizeTuning};
pub use sample_set::SampleSet;
pub use sgmcmc::{
    cyclical_step_size, psgld_step, run_sgmcmc, sghmc_step, sgld_step, ChainState, Dynamics, PsgldParams,
    SamplerConfig, SghmcParams, Variant,
};
pub use swag::{swag_fit, swag_sample, LossScale, SwagAccumulator, SwagConfig, SwagModel};
