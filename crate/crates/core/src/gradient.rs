//! Exact policy gradient `V'(p)` and the asymptotic variances of the
//! switchback and user-level estimators.
//!
//! Three routes to `V'(p)` are computed independently:
//!
//! * model-free: `d/dp sum_k pi_k(p) lambda_k(p)`,
//! * idle-time: `-mu pi_0'(p)`,
//! * weighted direct effect: `mu pi_0 sum_{k<K} (lambda'_k / lambda_k) S_{k+1}`.
//!
//! With analytic rate derivatives the first two differentiate the
//! cumulative-product form of `pi`; without them they fall back to central
//! differences of the steady state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{derivative_step, steady_state, ModelError, RateModel, SteadyState};
use crate::numeric::{compensated_sum, tail_sums};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradientError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("variance ordering violated at p = {price}: gap {gap}")]
    OrderingViolation { price: f64, gap: f64 },
    #[error("distribution has an empty state {0}")]
    EmptyState(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub value_model_free: f64,
    pub value_idle_time: f64,
    pub value_weighted_direct: f64,
    pub max_pairwise_gap: f64,
    /// Whether analytic rate derivatives were used.
    pub analytic: bool,
}

impl GradientReport {
    fn new(a: f64, b: f64, c: f64, analytic: bool) -> Self {
        let gap = (a - b).abs().max((a - c).abs()).max((b - c).abs());
        Self { value_model_free: a, value_idle_time: b, value_weighted_direct: c, max_pairwise_gap: gap, analytic }
    }

    /// The gradient, taken from the weighted-direct-effect route.
    pub fn value(&self) -> f64 {
        self.value_weighted_direct
    }
}

pub fn policy_gradient(model: &RateModel, p: f64) -> Result<GradientReport, ModelError> {
    let ss = steady_state(model, p)?;
    let derivs: Vec<f64> = (0..model.capacity()).map(|k| model.rate_derivative(k, p)).collect();
    let wde = weighted_direct_effect(&ss, &derivs);

    if model.has_analytic_derivatives() {
        let ratios: Vec<f64> = derivs.iter().zip(&ss.rates).map(|(d, r)| d / r).collect();
        // c_k = sum_{i<k} lambda'_i / lambda_i, so pi'_k / pi_k = c_k - E_pi[c].
        let mut cum = Vec::with_capacity(ss.pi.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for r in &ratios {
            acc += r;
            cum.push(acc);
        }
        let mean_c = compensated_sum(ss.pi.iter().zip(&cum).map(|(q, c)| q * c));
        let direct = compensated_sum(derivs.iter().zip(&ss.pi).map(|(d, q)| d * q));
        let indirect = compensated_sum(ss.rates.iter().enumerate().map(|(k, r)| r * ss.pi[k] * (cum[k] - mean_c)));
        let model_free = direct + indirect;
        let d_pi0 = -ss.pi[0] * mean_c;
        let idle = -ss.mu * d_pi0;
        Ok(GradientReport::new(model_free, idle, wde, true))
    } else {
        let h = derivative_step(p);
        let hi = steady_state(model, p + h)?;
        let lo = steady_state(model, p - h)?;
        let model_free = (hi.throughput - lo.throughput) / (2.0 * h);
        let idle = -ss.mu * (hi.pi[0] - lo.pi[0]) / (2.0 * h);
        Ok(GradientReport::new(model_free, idle, wde, false))
    }
}

fn weighted_direct_effect(ss: &SteadyState, derivs: &[f64]) -> f64 {
    let sum = compensated_sum(derivs.iter().zip(&ss.rates).enumerate().map(|(k, (d, r))| d / r * ss.tail_sums[k + 1]));
    ss.mu * ss.pi[0] * sum
}

/// Asymptotic variances in the `sqrt(T zeta^2)` scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticVariances {
    pub sigma2_model_free: f64,
    pub sigma2_idle: f64,
    pub sigma2_wde: f64,
    pub sigma2_ur: f64,
}

pub fn asymptotic_variance(model: &RateModel, p: f64) -> Result<AsymptoticVariances, ModelError> {
    let ss = steady_state(model, p)?;
    Ok(variances_from_parts(&ss.pi, &ss.tail_sums, ss.mu))
}

/// Evaluates the variance formulas at an arbitrary distribution over
/// `{0, .., K}` (the truth, or occupancy fractions from data).
pub fn variances_from_distribution(pi: &[f64], mu: f64) -> Result<AsymptoticVariances, GradientError> {
    if let Some(k) = pi.iter().position(|q| !(*q > 0.0)) {
        return Err(GradientError::EmptyState(k));
    }
    let s = tail_sums(pi);
    Ok(variances_from_parts(pi, &s, mu))
}

fn variances_from_parts(pi: &[f64], s: &[f64], mu: f64) -> AsymptoticVariances {
    let k_max = pi.len() - 1;
    let pi0 = pi[0];
    let d = compensated_sum((1..=k_max).map(|k| s[k] * s[k] / pi[k]));
    let c = compensated_sum((1..k_max).map(|k| s[k] * s[k + 1] / pi[k]));
    let sigma2_model_free = (1.0 - pi0) * mu + 2.0 * mu * pi0 * (c - (1.0 - pi0) * d);
    let sigma2_wde = mu * pi0 * pi0 * d;
    AsymptoticVariances { sigma2_model_free, sigma2_idle: 2.0 * sigma2_wde, sigma2_wde, sigma2_ur: sigma2_wde }
}

/// `mu sum_{k>=1} (sqrt(pi_k) - pi_0 S_k / sqrt(pi_k))^2`, which equals
/// `sigma2_model_free - sigma2_wde`.
pub fn variance_gap_identity(ss: &SteadyState) -> f64 {
    let pi0 = ss.pi[0];
    ss.mu
        * compensated_sum((1..ss.pi.len()).map(|k| {
            let root = ss.pi[k].sqrt();
            let t = root - pi0 * ss.tail_sums[k] / root;
            t * t
        }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub price: f64,
    pub sigma2_model_free: f64,
    pub sigma2_idle: f64,
    pub sigma2_wde: f64,
    /// `sigma2_model_free - sigma2_wde`, computed directly.
    pub gap: f64,
    /// The same gap from the sum-of-squares identity.
    pub gap_identity: f64,
}

pub fn variance_ordering_report(model: &RateModel, price_grid: &[f64]) -> Result<Vec<VarianceRow>, GradientError> {
    price_grid
        .iter()
        .map(|&p| {
            let ss = steady_state(model, p)?;
            let v = variances_from_parts(&ss.pi, &ss.tail_sums, ss.mu);
            let gap = v.sigma2_model_free - v.sigma2_wde;
            if gap < -1e-12 {
                return Err(GradientError::OrderingViolation { price: p, gap });
            }
            Ok(VarianceRow {
                price: p,
                sigma2_model_free: v.sigma2_model_free,
                sigma2_idle: v.sigma2_idle,
                sigma2_wde: v.sigma2_wde,
                gap,
                gap_identity: variance_gap_identity(&ss),
            })
        })
        .collect()
}

/// One row of plot-ready panel data: either a bar `pi_k` (with
/// `k_or_estimator` the state index) or a point on a variance curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub scenario: String,
    pub parameter: f64,
    pub k_or_estimator: String,
    pub value: f64,
}

/// Bars `pi_k(p)` for one model.
pub fn distribution_rows(
    scenario: &str,
    parameter: f64,
    model: &RateModel,
    p: f64,
) -> Result<Vec<PanelRow>, ModelError> {
    let ss = steady_state(model, p)?;
    Ok(ss
        .pi
        .iter()
        .enumerate()
        .map(|(k, q)| PanelRow { scenario: scenario.to_string(), parameter, k_or_estimator: k.to_string(), value: *q })
        .collect())
}

/// The three variance curves for one point of a parameter sweep.
pub fn variance_rows(scenario: &str, parameter: f64, model: &RateModel, p: f64) -> Result<Vec<PanelRow>, ModelError> {
    let v = asymptotic_variance(model, p)?;
    Ok([("sigma2_model_free", v.sigma2_model_free), ("sigma2_idle", v.sigma2_idle), ("sigma2_wde", v.sigma2_wde)]
        .into_iter()
        .map(|(name, value)| PanelRow {
            scenario: scenario.to_string(),
            parameter,
            k_or_estimator: name.to_string(),
            value,
        })
        .collect())
}

pub fn write_panel_csv<W: std::io::Write>(rows: &[PanelRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
