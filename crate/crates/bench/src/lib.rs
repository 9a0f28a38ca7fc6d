//! Shared fixtures for the benchmarks.

use congestion_lab::{scenario_preset, simulate, Design, Environment, EventLog, RateModel, SimOptions};

pub fn mm1(capacity: usize) -> RateModel {
    let params = [("K".to_string(), capacity.into())].into_iter().collect();
    scenario_preset("mm1", &params).expect("mm1 preset")
}

pub fn designs(zeta: f64) -> Vec<Design> {
    vec![
        Design::FixedPrice { p: 1.0 },
        Design::IntervalSwitchback { p: 1.0, zeta, interval_length: 50.0, assignment: Default::default() },
        Design::RegenerativeSwitchback { p: 1.0, zeta, regeneration_state: 0 },
        Design::UserLevel { p: 1.0, zeta },
    ]
}

pub fn sample_log(design: &Design, horizon: f64) -> EventLog {
    simulate(&Environment::Stationary(mm1(30)), design, horizon, 7, 0, SimOptions::default()).expect("simulation")
}
