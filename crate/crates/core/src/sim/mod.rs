//! Exact event-driven simulation of the queue under an experiment design.

mod design;
mod engine;
mod log;
mod trace;

pub use design::{assignment_sequence, Assignment, Design, PriceLabel};
pub use engine::{simulate, Environment, SimOptions};
pub use log::{sidecar_path, Event, EventKind, EventLog, LogHeader};
pub use trace::{
    build_ed_trace, read_grid_csv, synthetic_multiplier, synthetic_week, week_factor, write_grid_csv, Piece, Trace,
    SLOTS_PER_DAY, SLOT_HOURS,
};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("horizon must be finite and non-negative, got {0}")]
    InvalidHorizon(f64),
    #[error("initial state {state} outside 0..={capacity}")]
    InvalidInitialState { state: usize, capacity: usize },
    #[error("bad trace CSV: {0}")]
    BadTraceCsv(String),
    #[error("corrupt log: {0}")]
    CorruptLog(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(String),
}
