//! Optimization, early stopping, rolling experiments and gradient checks.

pub mod experiments;
pub mod fit;
pub mod gradcheck;
pub mod loss;
pub mod optim;

pub use experiments::{experiment_loaders, run_experiments, ExperimentPlan, ExperimentResult, ExperimentSuite, SummaryRow, SummaryTable};
pub use fit::{evaluate, fit, predict, EarlyStopping, FitResult, Metrics, TrainConfig, Verdict};
pub use loss::{mae_loss, mse_loss};
pub use optim::{clip_gradients, Adam, Sgd};
