//! Sample-quality and predictive-quality metrics.

mod coverage;
mod kernel;
mod mds;
mod mmd;
mod stein;
mod thin;

pub use coverage::{coverage, predictive_band, q2, quantile_sorted, CoverageReport, PredictiveBand};
pub use kernel::{energy_kernel, euclidean, imq_grad_first, imq_kernel, ImqNorm, KernelKind, KernelSpec};
pub use mds::{mds_embed, DiscrepancyMatrix, MdsEmbedding};
pub use mmd::{mean_kernel, median_heuristic, mmd, mmd_squared_with, mmd_with};
pub use stein::{ksd, stein_kernel, stein_kernel_with, PosteriorScore, ScoreOracle};
pub use thin::{mmd_thin, thinning_objective};
