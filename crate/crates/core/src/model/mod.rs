//! Dense ReLU networks and the Gaussian regression posterior they define.

mod arch;
mod dataset;
mod linear;
pub mod mlp;
mod posterior;
pub(crate) mod target;
pub mod train;

pub use arch::{DenseLayer, LayerShape, MlpArchitecture, ParamVector};
pub use dataset::RegressionDataset;
pub use linear::BayesianLinearModel;
pub use posterior::PosteriorSpec;
pub use target::{
    grad_potential, neg_log_prior, potential, stochastic_grad, stochastic_grad_on_batch, MinibatchSchedule, Target,
    VarianceReductionState,
};
pub use train::{prior_draw, train_map, train_map_from, OptConfig};
