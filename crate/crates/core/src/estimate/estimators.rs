use std::fmt;

use serde::{Deserialize, Serialize};

use super::summary::{summarize, windowed_summary, Randomization, Summary, WindowedSummary};
use super::EstimateError;
use crate::gradient::{variances_from_distribution, AsymptoticVariances, GradientError};
use crate::numeric::{compensated_sum, normal_upper_quantile, tail_sums};
use crate::sim::{EventLog, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Wde,
    Ur,
}

/// Which estimator to compute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorKind {
    ModelFree,
    IdleTime,
    Wde,
    Ur,
    Windowed {
        window: WindowKind,
        kernel_length: f64,
        #[serde(default)]
        truncation: Option<f64>,
    },
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorKind::ModelFree => f.write_str("model_free"),
            EstimatorKind::IdleTime => f.write_str("idle_time"),
            EstimatorKind::Wde => f.write_str("wde"),
            EstimatorKind::Ur => f.write_str("ur"),
            EstimatorKind::Windowed { window, kernel_length, truncation } => {
                let base = match window {
                    WindowKind::Wde => "wde",
                    WindowKind::Ur => "ur",
                };
                let trunc = if truncation.is_some() { "_trunc" } else { "" };
                write!(f, "{base}{trunc}@{kernel_length}")
            }
        }
    }
}

impl EstimatorKind {
    /// The plug-in variance matching this estimator, if it has one.
    pub fn variance(&self, v: &AsymptoticVariances) -> Option<f64> {
        match self {
            EstimatorKind::ModelFree => Some(v.sigma2_model_free),
            EstimatorKind::IdleTime => Some(v.sigma2_idle),
            EstimatorKind::Wde => Some(v.sigma2_wde),
            EstimatorKind::Ur => Some(v.sigma2_ur),
            EstimatorKind::Windowed { .. } => None,
        }
    }

    /// Estimators that make sense for a run, plus windowed variants for each
    /// kernel length. User-level runs get both plain and truncated windowed
    /// estimators; truncation defaults to `10 mu`.
    pub fn applicable(
        randomization: Randomization,
        kernel_lengths: &[f64],
        truncation: Option<f64>,
        mu: f64,
    ) -> Vec<EstimatorKind> {
        let mut out = Vec::new();
        match randomization {
            Randomization::Fixed | Randomization::Switchback => {
                out.extend([EstimatorKind::ModelFree, EstimatorKind::IdleTime, EstimatorKind::Wde]);
                out.extend(kernel_lengths.iter().map(|&s| EstimatorKind::Windowed {
                    window: WindowKind::Wde,
                    kernel_length: s,
                    truncation: None,
                }));
            }
            Randomization::UserLevel => {
                out.push(EstimatorKind::Ur);
                for &s in kernel_lengths {
                    out.push(EstimatorKind::Windowed { window: WindowKind::Ur, kernel_length: s, truncation: None });
                    out.push(EstimatorKind::Windowed {
                        window: WindowKind::Ur,
                        kernel_length: s,
                        truncation: Some(truncation.unwrap_or(10.0 * mu)),
                    });
                }
            }
        }
        out
    }
}

/// A point estimate with optional plug-in variance and confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimator: String,
    pub value: f64,
    pub sigma2_hat: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// `sqrt(T zeta^2)`.
    pub scale: f64,
    /// States whose term was dropped because a cell was empty.
    pub skipped_states: Vec<usize>,
    pub windows: Option<usize>,
    pub coverage: Option<f64>,
}

impl Estimate {
    fn point(estimator: impl Into<String>, value: f64, horizon: f64, zeta: f64) -> Self {
        Estimate {
            estimator: estimator.into(),
            value,
            sigma2_hat: None,
            ci_low: None,
            ci_high: None,
            scale: (horizon * zeta * zeta).sqrt(),
            skipped_states: Vec::new(),
            windows: None,
            coverage: None,
        }
    }
}

fn require_arms(s: &Summary) -> Result<(), EstimateError> {
    if s.t_plus > 0.0 && s.t_minus > 0.0 {
        Ok(())
    } else {
        Err(EstimateError::EmptyArm)
    }
}

/// `(N+/T+ - N-/T-) / (2 zeta)`.
pub fn tau_model_free(s: &Summary) -> Result<Estimate, EstimateError> {
    require_arms(s)?;
    let v = (s.n_plus as f64 / s.t_plus - s.n_minus as f64 / s.t_minus) / (2.0 * s.zeta);
    Ok(Estimate::point(EstimatorKind::ModelFree.to_string(), v, s.horizon, s.zeta))
}

/// `-(mu / 2 zeta) (T_{0,+}/T+ - T_{0,-}/T-)`.
pub fn tau_idle_time(s: &Summary) -> Result<Estimate, EstimateError> {
    require_arms(s)?;
    let v = -(s.mu / (2.0 * s.zeta)) * (s.t_k_plus[0] / s.t_plus - s.t_k_minus[0] / s.t_minus);
    Ok(Estimate::point(EstimatorKind::IdleTime.to_string(), v, s.horizon, s.zeta))
}

/// Relative difference of the two arms' arrival rates in state `k`, divided
/// by `zeta`.
pub fn delta_k(s: &Summary, k: usize) -> Result<f64, EstimateError> {
    match s.cell_rates(k) {
        (Some(rp), Some(rm)) if rp + rm > 0.0 => Ok((rp - rm) / (rp + rm) / s.zeta),
        _ => Err(EstimateError::EmptyCell(k)),
    }
}

/// `(N_{k,+} - N_{k,-}) / (zeta (N_{k,+} + N_{k,-}))`.
pub fn delta_ur_k(s: &Summary, k: usize) -> Result<f64, EstimateError> {
    let np = s.n_k_plus.get(k).copied().unwrap_or(0);
    let nm = s.n_k_minus.get(k).copied().unwrap_or(0);
    if np + nm == 0 {
        return Err(EstimateError::EmptyCell(k));
    }
    Ok((np as f64 - nm as f64) / (s.zeta * (np + nm) as f64))
}

/// `(T_0/T) sum_k delta_k sum_{i>k} T_i/T`, skipping empty cells that carry
/// weight.
fn weighted_direct(s: &Summary, delta: impl Fn(&Summary, usize) -> Result<f64, EstimateError>) -> (f64, Vec<usize>) {
    let t = s.horizon;
    let tails = tail_sums(&s.t_k);
    let mut skipped = Vec::new();
    let mut terms = Vec::with_capacity(s.k_obs);
    for k in 0..s.k_obs {
        let w = tails[k + 1] / t;
        if w <= 0.0 {
            continue;
        }
        match delta(s, k) {
            Ok(d) => terms.push(d * w),
            Err(_) => skipped.push(k),
        }
    }
    (s.t_k[0] / t * compensated_sum(terms), skipped)
}

fn direct_estimate(
    s: &Summary,
    kind: EstimatorKind,
    delta: impl Fn(&Summary, usize) -> Result<f64, EstimateError>,
) -> Estimate {
    let (inner, skipped) = weighted_direct(s, delta);
    let mut e = Estimate::point(kind.to_string(), s.mu * inner, s.horizon, s.zeta);
    e.skipped_states = skipped;
    e
}

/// Weighted direct effect estimator for switchback runs.
pub fn tau_wde(s: &Summary) -> Result<Estimate, EstimateError> {
    if s.randomization == Randomization::UserLevel {
        return Err(EstimateError::WrongDesign("use the user-level estimator".into()));
    }
    require_arms(s)?;
    Ok(direct_estimate(s, EstimatorKind::Wde, delta_k))
}

/// Weighted direct effect estimator for user-level runs.
pub fn tau_ur(s: &Summary) -> Result<Estimate, EstimateError> {
    if s.randomization != Randomization::UserLevel {
        return Err(EstimateError::WrongDesign("needs a user-level run".into()));
    }
    Ok(direct_estimate(s, EstimatorKind::Ur, delta_ur_k))
}

/// Windowed weighted direct effect, `mu (s / T) sum_w inner_w`, where `T` is
/// the span covered by complete windows. With `truncation = Some(c)` every
/// `inner_w` is clamped to `[-c, c]`.
pub fn windowed_estimate_from(
    ws: &WindowedSummary,
    window: WindowKind,
    truncation: Option<f64>,
) -> Result<Estimate, EstimateError> {
    let first = ws.windows.first().ok_or(EstimateError::KernelTooLong { kernel: ws.kernel_length, horizon: 0.0 })?;
    let randomization = first.randomization;
    match (window, randomization) {
        (WindowKind::Ur, r) if r != Randomization::UserLevel => {
            return Err(EstimateError::WrongDesign("needs a user-level run".into()))
        }
        (WindowKind::Wde, Randomization::UserLevel) => {
            return Err(EstimateError::WrongDesign("use the user-level estimator".into()))
        }
        _ => {}
    }
    if let Some(c) = truncation {
        if !(c > 0.0) {
            return Err(EstimateError::WrongDesign(format!("truncation must be positive, got {c}")));
        }
    }
    let mut skipped: Vec<usize> = Vec::new();
    let mut inners = Vec::with_capacity(ws.windows.len());
    for w in &ws.windows {
        let (inner, sk) = match window {
            WindowKind::Wde => weighted_direct(w, delta_k),
            WindowKind::Ur => weighted_direct(w, delta_ur_k),
        };
        skipped.extend(sk);
        inners.push(match truncation {
            Some(c) => inner.clamp(-c, c),
            None => inner,
        });
    }
    skipped.sort_unstable();
    skipped.dedup();
    let n = ws.windows.len() as f64;
    let kind = EstimatorKind::Windowed { window, kernel_length: ws.kernel_length, truncation };
    let value = first.mu * (compensated_sum(inners) / n);
    let mut e = Estimate::point(kind.to_string(), value, n * ws.kernel_length, first.zeta);
    e.skipped_states = skipped;
    e.windows = Some(ws.windows.len());
    e.coverage = Some(ws.coverage);
    Ok(e)
}

pub fn windowed_estimate(
    log: &EventLog,
    kernel_length: f64,
    window: WindowKind,
    truncation: Option<f64>,
) -> Result<Estimate, EstimateError> {
    windowed_estimate_from(&windowed_summary(log, kernel_length)?, window, truncation)
}

/// Plug-in variances at the occupancy fractions `T_k / T`.
pub fn variance_estimates(s: &Summary) -> Result<AsymptoticVariances, EstimateError> {
    let pi: Vec<f64> = s.t_k.iter().map(|t| t / s.horizon).collect();
    variances_from_distribution(&pi, s.mu).map_err(|e| match e {
        GradientError::EmptyState(k) => EstimateError::EmptyCell(k),
        GradientError::Model(m) => EstimateError::Log(SimError::Model(m)),
        GradientError::OrderingViolation { .. } => unreachable!("not produced by the plug-in"),
    })
}

/// `value +/- z_{alpha/2} sqrt(sigma2_hat) / sqrt(T zeta^2)`.
pub fn confidence_interval(
    e: &Estimate,
    sigma2_hat: f64,
    horizon: f64,
    zeta: f64,
    alpha: f64,
) -> Result<Estimate, EstimateError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EstimateError::InvalidAlpha(alpha));
    }
    if !(sigma2_hat >= 0.0) {
        return Err(EstimateError::InvalidVariance(sigma2_hat));
    }
    let half = normal_upper_quantile(alpha) * sigma2_hat.sqrt() / (horizon * zeta * zeta).sqrt();
    let mut out = e.clone();
    out.sigma2_hat = Some(sigma2_hat);
    out.ci_low = Some(e.value - half);
    out.ci_high = Some(e.value + half);
    Ok(out)
}

/// Computes one estimator from a log and its summary.
pub fn estimate_kind(log: &EventLog, s: &Summary, kind: EstimatorKind) -> Result<Estimate, EstimateError> {
    match kind {
        EstimatorKind::ModelFree => tau_model_free(s),
        EstimatorKind::IdleTime => tau_idle_time(s),
        EstimatorKind::Wde => tau_wde(s),
        EstimatorKind::Ur => tau_ur(s),
        EstimatorKind::Windowed { window, kernel_length, truncation } => {
            windowed_estimate(log, kernel_length, window, truncation)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    pub alpha: f64,
    pub kernel_lengths: Vec<f64>,
    pub truncation: Option<f64>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self { alpha: 0.05, kernel_lengths: Vec::new(), truncation: None }
    }
}

#[derive(Debug)]
pub struct EstimateRow {
    pub kind: EstimatorKind,
    pub result: Result<Estimate, EstimateError>,
}

/// Every applicable estimator for `log`, with plug-in CIs where a variance
/// formula exists. Fails only if the log itself is unusable.
pub fn estimate_all(log: &EventLog, opts: &EstimateOptions) -> Result<Vec<EstimateRow>, EstimateError> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(EstimateError::InvalidAlpha(opts.alpha));
    }
    let s = summarize(log)?;
    let variances = variance_estimates(&s).ok();
    let kinds = EstimatorKind::applicable(s.randomization, &opts.kernel_lengths, opts.truncation, s.mu);
    Ok(kinds
        .into_iter()
        .map(|kind| {
            let result =
                estimate_kind(log, &s, kind).and_then(|e| match variances.as_ref().and_then(|v| kind.variance(v)) {
                    Some(v) => confidence_interval(&e, v, s.horizon, s.zeta, opts.alpha),
                    None => Ok(e),
                });
            EstimateRow { kind, result }
        })
        .collect())
}
