use serde_json::json;

use super::HarnessError;
use crate::gradient::{distribution_rows, variance_rows, PanelRow};
use crate::model::ScenarioSpec;

/// One panel: the distribution at a fixed parameter plus variance curves
/// over a sweep of that parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSpec {
    pub scenario: &'static str,
    pub parameter: &'static str,
    pub fixed: f64,
    pub grid: Vec<f64>,
}

fn steps(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| ((lo + i as f64 * step) * 1e6).round() / 1e6).collect()
}

pub fn gallery_panels() -> Vec<PanelSpec> {
    vec![
        PanelSpec { scenario: "mm1", parameter: "lambda", fixed: 0.5, grid: steps(0.1, 0.9, 0.05) },
        PanelSpec { scenario: "zero_modified", parameter: "lambda0", fixed: 1.0, grid: steps(0.1, 2.0, 0.1) },
        PanelSpec { scenario: "power_law", parameter: "alpha", fixed: 0.4, grid: steps(0.0, 1.0, 0.05) },
        PanelSpec { scenario: "conformity", parameter: "lambda", fixed: 2.0, grid: steps(0.5, 3.0, 0.125) },
    ]
}

/// Truncation for an M/M/1 sweep point: at least 30, and deep enough that
/// `lambda^K < 1e-10`.
pub fn mm1_capacity(lambda: f64) -> usize {
    let needed = (1e-10f64.ln() / lambda.ln()).ceil() as usize;
    needed.max(30)
}

fn spec(panel: &PanelSpec, value: f64, sweep: bool) -> ScenarioSpec {
    let s = ScenarioSpec::new(panel.scenario).with(panel.parameter, value);
    if sweep && panel.scenario == "mm1" {
        s.with("K", json!(mm1_capacity(value)))
    } else {
        s
    }
}

/// Plot-ready rows for the four illustrative scenarios at `p = 1`: bars
/// `pi_k` at each panel's fixed parameter and the three variance curves over
/// its sweep.
pub fn run_scenario_gallery() -> Result<Vec<PanelRow>, HarnessError> {
    let p = 1.0;
    let mut rows = Vec::new();
    for panel in gallery_panels() {
        let model = spec(&panel, panel.fixed, false).build()?;
        rows.extend(distribution_rows(panel.scenario, panel.fixed, &model, p)?);
        for &x in &panel.grid {
            let model = spec(&panel, x, true).build()?;
            rows.extend(variance_rows(panel.scenario, x, &model, p)?);
        }
    }
    Ok(rows)
}
