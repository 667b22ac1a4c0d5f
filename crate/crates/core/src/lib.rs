//! Posterior approximation benchmarks for Bayesian neural networks on small
//! regression problems.
//!
//! The crate is organised the same way an experiment flows:
//!
//! - [`model`]: dense ReLU networks, the Gaussian likelihood and prior, the
//!   potential `U(w)` and its exact and mini-batched gradients, MAP training.
//! - [`samplers`]: HMC (the reference), the SGLD/SGHMC families, pSGLD, SWAG,
//!   deep ensembles and MC-dropout.
//! - [`metrics`]: energy-kernel MMD, IMQ kernel Stein discrepancy, greedy MMD
//!   thinning, predictive bands, PICP/MCP/CCP coverage, Q² and classical MDS.
//! - [`datasets`]: seeded generators for the four synthetic tasks.
//! - [`harness`]: configuration-driven sweeps that write CSV results.
//!
//! With the default `parallel` feature, data-parallel loops (kernel matrices,
//! ensembles, sweep cells) run on rayon. Without it every loop runs
//! sequentially; results are identical either way.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datasets;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod par;
pub mod rng;
pub mod samplers;

pub use error::{Error, Result};
pub use model::{MlpArchitecture, ParamVector, PosteriorSpec, RegressionDataset, Target};
