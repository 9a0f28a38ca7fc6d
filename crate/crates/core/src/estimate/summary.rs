use serde::{Deserialize, Serialize};

use super::EstimateError;
use crate::numeric::compensated_sum;
use crate::sim::{Design, EventKind, EventLog, PriceLabel};

/// How prices were randomized in the run a summary came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Randomization {
    Fixed,
    Switchback,
    UserLevel,
}

impl Randomization {
    pub fn of(design: &Design) -> Self {
        match design {
            Design::FixedPrice { .. } => Randomization::Fixed,
            Design::UserLevel { .. } => Randomization::UserLevel,
            _ => Randomization::Switchback,
        }
    }
}

/// Occupancy times and arrival counts split by state and price arm.
///
/// Fixed-price and user-level runs have no time-varying price, so all of
/// their time is booked to the `+` arm. Arrivals are booked by their label
/// (unlabelled arrivals also go to `+`).
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub k_obs: usize,
    pub t_plus: f64,
    pub t_minus: f64,
    pub t_k: Vec<f64>,
    pub t_k_plus: Vec<f64>,
    pub t_k_minus: Vec<f64>,
    pub n_plus: u64,
    pub n_minus: u64,
    pub n_k_plus: Vec<u64>,
    pub n_k_minus: Vec<u64>,
    pub zeta: f64,
    pub mu: f64,
    pub horizon: f64,
    pub randomization: Randomization,
}

impl Summary {
    /// Arrival rate in state `k` under each arm, `None` if the arm never
    /// occupied `k`.
    pub fn cell_rates(&self, k: usize) -> (Option<f64>, Option<f64>) {
        let rate = |n: &[u64], t: &[f64]| match (n.get(k), t.get(k)) {
            (Some(&n), Some(&t)) if t > 0.0 => Some(n as f64 / t),
            _ => None,
        };
        (rate(&self.n_k_plus, &self.t_k_plus), rate(&self.n_k_minus, &self.t_k_minus))
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Accumulator {
    max_state: usize,
    t: [Vec<f64>; 2],
    n: [Vec<u64>; 2],
}

fn arm(label: PriceLabel) -> usize {
    match label {
        PriceLabel::Minus => 1,
        PriceLabel::Plus | PriceLabel::Base => 0,
    }
}

fn grow<T: Default + Clone>(v: &mut Vec<T>, k: usize) {
    if v.len() <= k {
        v.resize(k + 1, T::default());
    }
}

impl Accumulator {
    fn time(&mut self, state: usize, label: PriceLabel, dt: f64) {
        self.max_state = self.max_state.max(state);
        let a = arm(label);
        grow(&mut self.t[a], state);
        self.t[a][state] += dt;
    }

    fn arrival(&mut self, state: usize, label: PriceLabel) {
        self.max_state = self.max_state.max(state);
        let a = arm(label);
        grow(&mut self.n[a], state);
        self.n[a][state] += 1;
    }

    pub(crate) fn finish(mut self, zeta: f64, mu: f64, horizon: f64, randomization: Randomization) -> Summary {
        let k = self.max_state;
        for v in &mut self.t {
            v.resize(k + 1, 0.0);
        }
        for v in &mut self.n {
            v.resize(k + 1, 0);
        }
        let [t_k_plus, t_k_minus] = self.t;
        let [n_k_plus, n_k_minus] = self.n;
        Summary {
            k_obs: k,
            t_plus: compensated_sum(t_k_plus.iter().copied()),
            t_minus: compensated_sum(t_k_minus.iter().copied()),
            t_k: t_k_plus.iter().zip(&t_k_minus).map(|(a, b)| a + b).collect(),
            n_plus: n_k_plus.iter().sum(),
            n_minus: n_k_minus.iter().sum(),
            t_k_plus,
            t_k_minus,
            n_k_plus,
            n_k_minus,
            zeta,
            mu,
            horizon,
            randomization,
        }
    }
}

/// Walks the state path of `log`, splitting time at every multiple of
/// `window` (if any) and handing each piece to the accumulator of its
/// window. Time past the last complete window is dropped.
pub(crate) fn accumulate(log: &EventLog, window: Option<f64>) -> Vec<Accumulator> {
    let horizon = log.horizon();
    let (n_windows, width) = match window {
        Some(s) => (((horizon / s) + 1e-9).floor() as usize, s),
        None => (1, horizon),
    };
    let mut acc = vec![Accumulator::default(); n_windows];
    if n_windows == 0 {
        return acc;
    }
    let end_of = |w: usize| if window.is_none() { horizon } else { (w + 1) as f64 * width };
    let covered = end_of(n_windows - 1);

    let switchback = log.header.design.is_switchback();
    let mut state = log.header.initial_state;
    let mut label = if switchback { log.header.initial_label } else { PriceLabel::Plus };
    let mut t = 0.0;
    let mut w = 0;

    let advance = |acc: &mut [Accumulator], t: &mut f64, w: &mut usize, to: f64, state: usize, label: PriceLabel| {
        let to = to.min(covered);
        while *t < to && *w < acc.len() {
            let end = end_of(*w).min(to);
            if end > *t {
                acc[*w].time(state, label, end - *t);
                *t = end;
            }
            if *t >= end_of(*w) {
                *w += 1;
            } else {
                break;
            }
        }
    };

    for e in &log.events {
        advance(&mut acc, &mut t, &mut w, e.t, state, label);
        match e.kind {
            EventKind::Arrival { pre_state, label: l } => {
                if e.t < covered && w < n_windows {
                    acc[w].arrival(pre_state, if switchback { label } else { l });
                }
                state += 1;
            }
            EventKind::Departure { .. } => state -= 1,
            EventKind::PriceSwitch { label: l, .. } => label = l,
        }
    }
    advance(&mut acc, &mut t, &mut w, horizon, state, label);
    acc
}

/// Exact counting summary of a validated log.
pub fn summarize(log: &EventLog) -> Result<Summary, EstimateError> {
    log.validate()?;
    let acc = accumulate(log, None).pop().unwrap_or_default();
    Ok(finish(acc, log))
}

pub(crate) fn finish(acc: Accumulator, log: &EventLog) -> Summary {
    let d = &log.header.design;
    acc.finish(d.zeta(), log.header.mu, log.horizon(), Randomization::of(d))
}

/// Per-window summaries for kernel length `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSummary {
    pub kernel_length: f64,
    pub windows: Vec<Summary>,
    /// Fraction of the horizon covered by complete windows.
    pub coverage: f64,
}

pub fn windowed_summary(log: &EventLog, s: f64) -> Result<WindowedSummary, EstimateError> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(EstimateError::InvalidKernel(s));
    }
    log.validate()?;
    let d = &log.header.design;
    let acc = accumulate(log, Some(s));
    if acc.is_empty() {
        return Err(EstimateError::KernelTooLong { kernel: s, horizon: log.horizon() });
    }
    let n = acc.len();
    let windows: Vec<Summary> =
        acc.into_iter().map(|a| a.finish(d.zeta(), log.header.mu, s, Randomization::of(d))).collect();
    Ok(WindowedSummary { kernel_length: s, windows, coverage: (n as f64 * s / log.horizon()).min(1.0) })
}
