use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::config::{DesignSpec, EnvironmentSpec, ExperimentConfig, ZetaSpec};
use super::mc::run_mc;
use super::HarnessError;
use crate::numeric::compensated_sum;
use crate::sim::Assignment;

/// Sweep of interval lengths (switchback) and kernel lengths (user-level)
/// on the ED trace. Lengths are in hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonstationaryConfig {
    pub weeks: usize,
    pub p: f64,
    pub zeta: f64,
    pub replications: usize,
    pub master_seed: u64,
    pub interval_lengths: Vec<f64>,
    pub kernel_lengths: Vec<f64>,
    #[serde(default)]
    pub grid_csv: Option<PathBuf>,
}

impl Default for NonstationaryConfig {
    fn default() -> Self {
        Self {
            weeks: 4,
            p: 1.0,
            zeta: 0.1,
            replications: 100,
            master_seed: 0,
            interval_lengths: vec![1.0, 6.0, 24.0, 84.0, 336.0],
            kernel_lengths: vec![0.5, 3.0, 6.0, 24.0, 672.0],
            grid_csv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub design: &'static str,
    pub estimator: String,
    pub length: f64,
    pub n: usize,
    pub rmse: f64,
    pub bias: f64,
    pub truth: f64,
}

fn summarize_values(design: &'static str, estimator: String, length: f64, values: &[f64], truth: f64) -> StudyRow {
    let n = values.len();
    let mse = compensated_sum(values.iter().map(|x| (x - truth) * (x - truth))) / n as f64;
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    StudyRow { design, estimator, length, n, rmse: mse.sqrt(), bias: mean - truth, truth }
}

/// RMSE of the model-free and idle-time estimators against interval length,
/// and of the windowed user-level estimator against kernel length.
pub fn run_nonstationary_study(
    cfg: &NonstationaryConfig,
    threads: Option<usize>,
) -> Result<Vec<StudyRow>, HarnessError> {
    let horizon = cfg.weeks as f64 * 7.0 * 24.0;
    let environment = EnvironmentSpec::EdTrace { weeks: cfg.weeks, grid_csv: cfg.grid_csv.clone() };
    let base = |design: DesignSpec| {
        let mut c = ExperimentConfig::new(environment.clone(), design, horizon);
        c.zeta = ZetaSpec::Fixed(cfg.zeta);
        c.replications = cfg.replications;
        c.master_seed = cfg.master_seed;
        c
    };
    let mut rows = Vec::new();
    for &l in &cfg.interval_lengths {
        let c = base(DesignSpec::IntervalSwitchback {
            p: cfg.p,
            interval_length: Some(l),
            num_intervals: None,
            assignment: Assignment::BalancedPermutation,
        });
        let res = run_mc(&c, threads)?;
        for name in ["model_free", "idle_time", "wde"] {
            rows.push(summarize_values("interval_switchback", name.to_string(), l, &res.values(name), res.meta.truth));
        }
    }
    let mut c = base(DesignSpec::UserLevel { p: cfg.p });
    c.kernel_lengths = cfg.kernel_lengths.clone();
    let res = run_mc(&c, threads)?;
    for &s in &cfg.kernel_lengths {
        for name in [format!("ur@{s}"), format!("ur_trunc@{s}")] {
            let values = res.values(&name);
            rows.push(summarize_values("user_level", name, s, &values, res.meta.truth));
        }
    }
    Ok(rows)
}

pub fn write_study_csv<W: Write>(rows: &[StudyRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["design", "estimator", "length", "n", "rmse", "bias", "truth"])?;
    for r in rows {
        w.write_record([
            r.design.to_string(),
            r.estimator.clone(),
            r.length.to_string(),
            r.n.to_string(),
            r.rmse.to_string(),
            r.bias.to_string(),
            r.truth.to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(())
}
