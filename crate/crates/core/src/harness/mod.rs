//! Configuration, Monte Carlo replication and the reproduction studies.

mod config;
mod gallery;
mod mc;
mod nonstationary;

pub use config::{reference_variances, truth, DesignSpec, EnvironmentSpec, ExperimentConfig, ZetaSpec};
pub use gallery::{gallery_panels, mm1_capacity, run_scenario_gallery, PanelSpec};
pub use mc::{
    aggregate, companion_paths, read_replicates, run_mc, write_aggregates, write_mc_outputs, write_replicates,
    AggregateRow, McMeta, McResult, ReplicateRow, AGGREGATE_HEADER, REPLICATE_HEADER,
};
pub use nonstationary::{run_nonstationary_study, write_study_csv, NonstationaryConfig, StudyRow};

use thiserror::Error;

use crate::estimate::EstimateError;
use crate::gradient::GradientError;
use crate::model::ModelError;
use crate::sim::SimError;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "CONGESTION_LAB_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gradient(#[from] GradientError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(String),
}

impl HarnessError {
    /// True when the input configuration, not the data, is at fault.
    pub fn is_config_error(&self) -> bool {
        match self {
            HarnessError::Config(_) | HarnessError::Model(_) | HarnessError::Gradient(_) => true,
            HarnessError::Sim(e) => matches!(
                e,
                SimError::InvalidDesign(_)
                    | SimError::InvalidTrace(_)
                    | SimError::InvalidHorizon(_)
                    | SimError::InvalidInitialState { .. }
                    | SimError::Model(_)
            ),
            HarnessError::Estimate(e) => matches!(
                e,
                EstimateError::InvalidAlpha(_) | EstimateError::InvalidKernel(_) | EstimateError::KernelTooLong { .. }
            ),
            HarnessError::Csv(_) | HarnessError::Io(_) => false,
        }
    }
}

/// Worker count: the request (or all cores), capped by `CONGESTION_LAB_THREADS`.
pub fn resolve_threads(requested: Option<usize>) -> usize {
    let wanted =
        requested.filter(|n| *n > 0).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let cap = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|n| *n > 0);
    match cap {
        Some(c) => wanted.min(c),
        None => wanted,
    }
}

pub(crate) fn build_pool(requested: Option<usize>) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_threads(requested))
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))
}
