//! Simulation and estimation toolkit for pricing experiments on a
//! single-server queue with state-dependent arrivals.
//!
//! * [`model`]: rate models, steady states, generator and group inverse.
//! * [`gradient`]: exact policy gradient `V'(p)` and asymptotic variances.
//! * [`sim`]: event-driven simulation under fixed-price, switchback and
//!   user-level designs.
//! * [`estimate`]: summaries of event logs and the gradient estimators.
//! * [`harness`]: Monte Carlo replication, scenario gallery and the
//!   non-stationary study.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod estimate;
pub mod gradient;
pub mod harness;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod sim;

pub use estimate::{estimate_all, summarize, Estimate, EstimateError, EstimateOptions, EstimatorKind, Summary};
pub use gradient::{asymptotic_variance, policy_gradient, AsymptoticVariances, GradientReport};
pub use harness::{run_mc, ExperimentConfig, HarnessError, McResult};
pub use model::{
    scenario_preset, steady_state, ModelError, PriceFamily, PriceRange, RateModel, ScenarioSpec, SteadyState,
};
pub use sim::{simulate, Design, Environment, EventLog, PriceLabel, SimError, SimOptions, Trace};
