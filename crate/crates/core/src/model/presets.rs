//! Named scenario presets: the four illustrative queues plus the
//! proportional-balking environment, each under a chosen price family.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ModelError, ModelKind, PriceFamily, RateModel};

pub type ScenarioParams = BTreeMap<String, Value>;

pub const SCENARIO_NAMES: [&str; 6] =
    ["mm1", "zero_modified", "power_law", "conformity", "appendix_linear", "appendix_quadratic"];

/// A preset name plus its parameter map, as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub params: ScenarioParams,
}

impl ScenarioSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), params: ScenarioParams::new() }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn build(&self) -> Result<RateModel, ModelError> {
        scenario_preset(&self.name, &self.params)
    }
}

struct Params<'a> {
    scenario: &'a str,
    map: &'a ScenarioParams,
}

impl Params<'_> {
    fn check_keys(&self, allowed: &[&str]) -> Result<(), ModelError> {
        match self.map.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(ModelError::InvalidParameter(format!(
                "scenario `{}` has no parameter `{k}` (expected one of {allowed:?})",
                self.scenario
            ))),
            None => Ok(()),
        }
    }

    fn number(&self, key: &str, default: f64) -> Result<f64, ModelError> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => {
                v.as_f64().ok_or_else(|| ModelError::InvalidParameter(format!("`{key}` must be a number, got {v}")))
            }
        }
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64, ModelError> {
        let v = self.number(key, default)?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(ModelError::InvalidParameter(format!("`{key}` must be positive, got {v}")))
        }
    }

    fn capacity(&self, default: usize) -> Result<usize, ModelError> {
        let v = self.number("K", default as f64)?;
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(ModelError::InvalidParameter(format!("`K` must be a positive integer, got {v}")))
        }
    }

    fn text(&self, key: &str, default: &'static str) -> Result<String, ModelError> {
        match self.map.get(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(v) => Err(ModelError::InvalidParameter(format!("`{key}` must be a string, got {v}"))),
        }
    }

    fn family(&self) -> Result<PriceFamily, ModelError> {
        let name = self.text("family", "linear")?;
        PriceFamily::parse(&name).ok_or_else(|| ModelError::InvalidParameter(format!("unknown price family `{name}`")))
    }
}

const BASE_KEYS: [&str; 3] = ["K", "mu", "family"];

/// Builds a named preset. Rates are `lambda_k(1) * f(p)` where `f` is the
/// price family (`2 - p` by default) and valid prices are `(0, 2)`.
///
/// | name | `lambda_k(1)` | defaults |
/// |---|---|---|
/// | `mm1` | `lambda` | `lambda = 0.5, K = 30` |
/// | `zero_modified` | `lambda0` at k = 0, `lambda` elsewhere | `lambda0 = 1, lambda = 0.5, K = 30` |
/// | `power_law` | `scale (k+1)^-alpha` | `alpha = 0.4, scale = 2, K = 15` |
/// | `conformity` | `lambda (0.5 + (k-7)/200)` | `lambda = 2, K = 15` |
/// | `appendix_linear`, `appendix_quadratic` | table of `base` | `base = balking` |
///
/// `balking` is `4 a / (1 + k)` with `mu = 2, K = 30`. The two `appendix_*`
/// presets pin the family to linear or quadratic and accept the parameters of
/// their `base` table. `mu` defaults to 1 elsewhere.
pub fn scenario_preset(name: &str, params: &ScenarioParams) -> Result<RateModel, ModelError> {
    let ps = Params { scenario: name, map: params };
    match name {
        "appendix_linear" | "appendix_quadratic" => {
            let family = if name == "appendix_linear" { PriceFamily::Linear } else { PriceFamily::Quadratic };
            let base = ps.text("base", "balking")?;
            let mut inner = params.clone();
            inner.remove("base");
            let inner_ps = Params { scenario: name, map: &inner };
            let (table, mu) = base_table(&base, &inner_ps, false)?;
            build(name, &base, table, mu, family)
        }
        _ => {
            let family = ps.family()?;
            let (table, mu) = base_table(name, &ps, true)?;
            build(name, name, table, mu, family)
        }
    }
}

fn build(name: &str, base: &str, table: Vec<f64>, mu: f64, family: PriceFamily) -> Result<RateModel, ModelError> {
    let id = if name == base { name.to_string() } else { format!("{name}({base})") };
    Ok(RateModel::from_table(id, mu, table, family)?.with_kind(ModelKind::Preset(name.to_string())))
}

fn base_table(name: &str, ps: &Params<'_>, allow_family: bool) -> Result<(Vec<f64>, f64), ModelError> {
    let with_family = |keys: &[&'static str]| -> Vec<&'static str> {
        let mut all: Vec<&str> = keys.to_vec();
        all.extend(BASE_KEYS.iter().filter(|k| allow_family || **k != "family"));
        all
    };
    match name {
        "mm1" => {
            ps.check_keys(&with_family(&["lambda"]))?;
            let lambda = ps.positive("lambda", 0.5)?;
            let k = ps.capacity(30)?;
            Ok((vec![lambda; k], ps.positive("mu", 1.0)?))
        }
        "zero_modified" => {
            ps.check_keys(&with_family(&["lambda0", "lambda"]))?;
            let lambda0 = ps.positive("lambda0", 1.0)?;
            let lambda = ps.positive("lambda", 0.5)?;
            let k = ps.capacity(30)?;
            let mut t = vec![lambda; k];
            t[0] = lambda0;
            Ok((t, ps.positive("mu", 1.0)?))
        }
        "power_law" => {
            ps.check_keys(&with_family(&["alpha", "scale"]))?;
            let alpha = ps.number("alpha", 0.4)?;
            let scale = ps.positive("scale", 2.0)?;
            let k = ps.capacity(15)?;
            let t = (0..k).map(|i| scale * ((i + 1) as f64).powf(-alpha)).collect();
            Ok((t, ps.positive("mu", 1.0)?))
        }
        "conformity" => {
            ps.check_keys(&with_family(&["lambda"]))?;
            let lambda = ps.positive("lambda", 2.0)?;
            let k = ps.capacity(15)?;
            let t: Vec<f64> = (0..k).map(|i| lambda * (0.5 + (i as f64 - 7.0) / 200.0)).collect();
            if t.iter().any(|r| *r <= 0.0) {
                return Err(ModelError::InvalidParameter(format!("conformity rates turn non-positive for K = {k}")));
            }
            Ok((t, ps.positive("mu", 1.0)?))
        }
        "balking" => {
            ps.check_keys(&with_family(&["a"]))?;
            let a = ps.positive("a", 1.0)?;
            let k = ps.capacity(30)?;
            let t = (0..k).map(|i| 4.0 * a / (1.0 + i as f64)).collect();
            Ok((t, ps.positive("mu", 2.0)?))
        }
        other => Err(ModelError::UnknownScenario(other.to_string())),
    }
}
