//! Gradient estimators computed from event logs.

mod estimators;
mod summary;

pub use estimators::{
    confidence_interval, delta_k, delta_ur_k, estimate_all, estimate_kind, tau_idle_time, tau_model_free, tau_ur,
    tau_wde, variance_estimates, windowed_estimate, windowed_estimate_from, Estimate, EstimateOptions, EstimateRow,
    EstimatorKind, WindowKind,
};
pub use summary::{summarize, windowed_summary, Randomization, Summary, WindowedSummary};

use thiserror::Error;

use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("one price arm has no occupancy time")]
    EmptyArm,
    #[error("state {0} has no data in one of the arms")]
    EmptyCell(usize),
    #[error("estimator does not apply to this design: {0}")]
    WrongDesign(String),
    #[error("kernel length {kernel} leaves no complete window in horizon {horizon}")]
    KernelTooLong { kernel: f64, horizon: f64 },
    #[error("kernel length must be positive, got {0}")]
    InvalidKernel(f64),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("variance estimate must be non-negative, got {0}")]
    InvalidVariance(f64),
    #[error(transparent)]
    Log(#[from] SimError),
}
