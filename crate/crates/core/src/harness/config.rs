use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::gradient::{asymptotic_variance, policy_gradient, AsymptoticVariances};
use crate::model::{scenario_preset, ScenarioParams, ScenarioSpec};
use crate::sim::{build_ed_trace, read_grid_csv, Assignment, Design, Environment, Trace};

/// Where the arrivals come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    Scenario {
        name: String,
        #[serde(default)]
        params: ScenarioParams,
    },
    /// Hour-based ED trace; `grid_csv` replaces the synthetic week.
    EdTrace {
        weeks: usize,
        #[serde(default)]
        grid_csv: Option<PathBuf>,
    },
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        regimes: Vec<ScenarioSpec>,
    },
}

impl EnvironmentSpec {
    pub fn scenario(name: &str) -> Self {
        EnvironmentSpec::Scenario { name: name.to_string(), params: ScenarioParams::new() }
    }

    pub fn build(&self, p: f64) -> Result<Environment, HarnessError> {
        Ok(match self {
            EnvironmentSpec::Scenario { name, params } => Environment::Stationary(scenario_preset(name, params)?),
            EnvironmentSpec::EdTrace { weeks, grid_csv } => {
                let grid = match grid_csv {
                    Some(path) => {
                        let f = File::open(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
                        Some(read_grid_csv(BufReader::new(f))?)
                    }
                    None => None,
                };
                Environment::Trace(build_ed_trace(*weeks, p, grid.as_deref())?)
            }
            EnvironmentSpec::PiecewiseConstant { breakpoints, regimes } => {
                let models = regimes.iter().map(|r| r.build()).collect::<Result<Vec<_>, _>>()?;
                Environment::Trace(Trace::piecewise(breakpoints.clone(), models)?)
            }
        })
    }
}

/// Design without its perturbation; `zeta` comes from the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DesignSpec {
    FixedPrice {
        p: f64,
    },
    /// Give exactly one of `interval_length` and `num_intervals`.
    IntervalSwitchback {
        p: f64,
        #[serde(default)]
        interval_length: Option<f64>,
        #[serde(default)]
        num_intervals: Option<usize>,
        #[serde(default)]
        assignment: Assignment,
    },
    RegenerativeSwitchback {
        p: f64,
        #[serde(default)]
        regeneration_state: usize,
    },
    UserLevel {
        p: f64,
    },
}

impl DesignSpec {
    pub fn price(&self) -> f64 {
        match *self {
            DesignSpec::FixedPrice { p }
            | DesignSpec::IntervalSwitchback { p, .. }
            | DesignSpec::RegenerativeSwitchback { p, .. }
            | DesignSpec::UserLevel { p } => p,
        }
    }

    pub fn resolve(&self, zeta: f64, horizon: f64) -> Result<Design, HarnessError> {
        Ok(match *self {
            DesignSpec::FixedPrice { p } => Design::FixedPrice { p },
            DesignSpec::IntervalSwitchback { p, interval_length, num_intervals, assignment } => {
                let interval_length = match (interval_length, num_intervals) {
                    (Some(l), None) => l,
                    (None, Some(n)) if n >= 1 => horizon / n as f64,
                    (None, Some(_)) => return Err(HarnessError::Config("num_intervals must be at least 1".into())),
                    _ => {
                        return Err(HarnessError::Config(
                            "interval switchback needs exactly one of interval_length and num_intervals".into(),
                        ))
                    }
                };
                Design::IntervalSwitchback { p, zeta, interval_length, assignment }
            }
            DesignSpec::RegenerativeSwitchback { p, regeneration_state } => {
                Design::RegenerativeSwitchback { p, zeta, regeneration_state }
            }
            DesignSpec::UserLevel { p } => Design::UserLevel { p, zeta },
        })
    }
}

/// A fixed perturbation or the rule `zeta_T = c T^-gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ZetaSpec {
    Fixed(f64),
    Rule { c: f64, gamma: f64 },
}

impl Default for ZetaSpec {
    fn default() -> Self {
        ZetaSpec::Rule { c: 0.5, gamma: 0.3 }
    }
}

impl ZetaSpec {
    pub fn value(&self, horizon: f64) -> f64 {
        match *self {
            ZetaSpec::Fixed(z) => z,
            ZetaSpec::Rule { c, gamma } => c * horizon.powf(-gamma),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        match *self {
            ZetaSpec::Fixed(z) if !(z > 0.0 && z.is_finite()) => {
                Err(HarnessError::Config(format!("zeta must be positive, got {z}")))
            }
            ZetaSpec::Rule { c, .. } if !(c > 0.0 && c.is_finite()) => {
                Err(HarnessError::Config(format!("zeta rule constant must be positive, got {c}")))
            }
            ZetaSpec::Rule { gamma, .. } if !(gamma > 0.25 && gamma < 0.5) => {
                Err(HarnessError::Config(format!("zeta rule exponent must lie in (0.25, 0.5), got {gamma}")))
            }
            _ => Ok(()),
        }
    }
}

fn one() -> usize {
    1
}

fn default_alpha() -> f64 {
    0.05
}

/// One Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    pub design: DesignSpec,
    pub horizon: f64,
    #[serde(default)]
    pub zeta: ZetaSpec,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub kernel_lengths: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub truncation_c: Option<f64>,
    #[serde(default)]
    pub initial_state: usize,
    #[serde(default)]
    pub burn_in: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(environment: EnvironmentSpec, design: DesignSpec, horizon: f64) -> Self {
        Self {
            environment,
            design,
            horizon,
            zeta: ZetaSpec::default(),
            replications: 1,
            master_seed: 0,
            kernel_lengths: Vec::new(),
            alpha: default_alpha(),
            truncation_c: None,
            initial_state: 0,
            burn_in: 0.0,
            output: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let f = File::open(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_reader(BufReader::new(f))
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if let Some(s) = self.kernel_lengths.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return bad(format!("kernel lengths must be positive, got {s}"));
        }
        if let Some(c) = self.truncation_c {
            if !(c > 0.0) {
                return bad(format!("truncation constant must be positive, got {c}"));
            }
        }
        if !(self.burn_in >= 0.0 && self.burn_in.is_finite()) {
            return bad(format!("burn_in must be non-negative, got {}", self.burn_in));
        }
        self.zeta.validate()
    }

    pub fn zeta_value(&self) -> f64 {
        self.zeta.value(self.horizon)
    }

    pub fn resolved_design(&self) -> Result<Design, HarnessError> {
        self.design.resolve(self.zeta_value(), self.horizon)
    }

    pub fn build_environment(&self) -> Result<Environment, HarnessError> {
        self.environment.build(self.design.price())
    }
}

/// The estimand: `V'(p)`, or its time average over a trace.
pub fn truth(env: &Environment, p: f64, horizon: f64) -> Result<f64, HarnessError> {
    Ok(match env {
        Environment::Stationary(m) => policy_gradient(m, p)?.value(),
        Environment::Trace(t) => t.average_gradient(p, horizon)?,
    })
}

/// Analytic variances, available only for stationary environments.
pub fn reference_variances(env: &Environment, p: f64) -> Result<Option<AsymptoticVariances>, HarnessError> {
    Ok(match env {
        Environment::Stationary(m) => Some(asymptotic_variance(m, p)?),
        Environment::Trace(_) => None,
    })
}
