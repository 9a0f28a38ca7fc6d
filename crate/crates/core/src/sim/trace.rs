//! Time-varying environments.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::gradient::policy_gradient;
use crate::model::{scenario_preset, PriceRange, RateModel, ScenarioParams};

pub const SLOTS_PER_DAY: usize = 48;
pub const SLOT_HOURS: f64 = 0.5;

/// Week-level scale factors of the ED trace; weeks beyond the table keep
/// growing by 0.1 per week.
pub fn week_factor(week: usize) -> f64 {
    const A: [f64; 4] = [0.9, 1.0, 1.1, 1.2];
    A.get(week).copied().unwrap_or(0.8 + 0.1 * (week + 1) as f64)
}

/// Synthetic half-hourly multiplier `b_{d,t}` for day `d` (0 = Monday) and
/// slot `t`: a day-night sinusoid peaking mid-afternoon, with Saturday
/// damped and shifted later.
pub fn synthetic_multiplier(day: usize, slot: usize) -> f64 {
    let hour = slot as f64 * SLOT_HOURS;
    let saturday = day % 7 == 5;
    let shift = if saturday { 3.0 } else { 0.0 };
    let mut b = 1.0 + 0.6 * (2.0 * PI * (hour - 6.0 - shift) / 24.0).sin();
    if saturday {
        b *= 0.75;
    }
    b.max(0.2)
}

/// One week of synthetic multipliers, `7 * 48` slots.
pub fn synthetic_week() -> Vec<f64> {
    (0..7).flat_map(|d| (0..SLOTS_PER_DAY).map(move |t| synthetic_multiplier(d, t))).collect()
}

/// A stretch of time during which the arrival rates are `regime` scaled by
/// `multiplier`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub regime: usize,
    pub multiplier: f64,
}

#[derive(Debug, Clone)]
pub enum Trace {
    /// Regime `b` governs `[breakpoints[b] T, breakpoints[b+1] T)`.
    PiecewiseConstant { breakpoints: Vec<f64>, regimes: Vec<RateModel> },
    /// Slot `i` scales `base` arrivals by `multipliers[i % len]`.
    Grid { base: RateModel, multipliers: Vec<f64>, slot_length: f64 },
}

impl Trace {
    pub fn piecewise(breakpoints: Vec<f64>, regimes: Vec<RateModel>) -> Result<Self, SimError> {
        let t = Trace::PiecewiseConstant { breakpoints, regimes };
        t.validate()?;
        Ok(t)
    }

    pub fn grid(base: RateModel, multipliers: Vec<f64>, slot_length: f64) -> Result<Self, SimError> {
        let t = Trace::Grid { base, multipliers, slot_length };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidTrace(m));
        match self {
            Trace::PiecewiseConstant { breakpoints, regimes } => {
                if regimes.is_empty() || breakpoints.len() != regimes.len() + 1 {
                    return bad(format!(
                        "{} regimes need {} breakpoints, got {}",
                        regimes.len(),
                        regimes.len() + 1,
                        breakpoints.len()
                    ));
                }
                if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
                    return bad("breakpoints must start at 0 and end at 1".into());
                }
                if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
                    return bad(format!("breakpoints not strictly increasing: {breakpoints:?}"));
                }
                let (mu, k) = (regimes[0].mu(), regimes[0].capacity());
                if regimes.iter().any(|r| r.mu() != mu || r.capacity() != k) {
                    return bad("all regimes must share mu and capacity".into());
                }
            }
            Trace::Grid { multipliers, slot_length, .. } => {
                if multipliers.is_empty() {
                    return bad("empty multiplier grid".into());
                }
                if let Some(m) = multipliers.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
                    return bad(format!("multipliers must be positive, got {m}"));
                }
                if !(*slot_length > 0.0 && slot_length.is_finite()) {
                    return bad(format!("slot length must be positive, got {slot_length}"));
                }
            }
        }
        Ok(())
    }

    pub fn regimes(&self) -> &[RateModel] {
        match self {
            Trace::PiecewiseConstant { regimes, .. } => regimes,
            Trace::Grid { base, .. } => std::slice::from_ref(base),
        }
    }

    pub fn mu(&self) -> f64 {
        self.regimes()[0].mu()
    }

    pub fn capacity(&self) -> usize {
        self.regimes()[0].capacity()
    }

    /// Prices valid in every regime.
    pub fn price_range(&self) -> PriceRange {
        let mut r = self.regimes()[0].price_range();
        for m in self.regimes() {
            r.low = r.low.max(m.price_range().low);
            r.high = r.high.min(m.price_range().high);
        }
        r
    }

    pub fn id(&self) -> String {
        match self {
            Trace::PiecewiseConstant { regimes, .. } => {
                let ids: Vec<&str> = regimes.iter().map(|r| r.id()).collect();
                format!("piecewise[{}]", ids.join(","))
            }
            Trace::Grid { base, multipliers, slot_length } => {
                format!("grid[{};{}x{}]", base.id(), multipliers.len(), slot_length)
            }
        }
    }

    /// Splits `[0, horizon]` into constant-rate pieces.
    pub fn pieces(&self, horizon: f64) -> Vec<Piece> {
        let mut out = Vec::new();
        if !(horizon > 0.0) {
            return out;
        }
        match self {
            Trace::PiecewiseConstant { breakpoints, .. } => {
                for (b, w) in breakpoints.windows(2).enumerate() {
                    let end = if b + 2 == breakpoints.len() { horizon } else { w[1] * horizon };
                    out.push(Piece { start: w[0] * horizon, end, regime: b, multiplier: 1.0 });
                }
            }
            Trace::Grid { multipliers, slot_length, .. } => {
                let n = (horizon / slot_length).ceil() as usize;
                for i in 0..n {
                    let start = i as f64 * slot_length;
                    let end = ((i + 1) as f64 * slot_length).min(horizon);
                    if end > start {
                        out.push(Piece { start, end, regime: 0, multiplier: multipliers[i % multipliers.len()] });
                    }
                }
            }
        }
        out
    }

    /// Time average of the local policy gradient over `[0, horizon]`.
    pub fn average_gradient(&self, p: f64, horizon: f64) -> Result<f64, SimError> {
        if !(horizon > 0.0) {
            return Err(SimError::InvalidHorizon(horizon));
        }
        let mut cache: BTreeMap<(usize, u64), f64> = BTreeMap::new();
        let mut total = 0.0;
        for piece in self.pieces(horizon) {
            let key = (piece.regime, piece.multiplier.to_bits());
            let g = match cache.get(&key) {
                Some(g) => *g,
                None => {
                    let m = self.regimes()[piece.regime].scaled_arrivals(piece.multiplier)?;
                    let g = policy_gradient(&m, p)?.value();
                    cache.insert(key, g);
                    g
                }
            };
            total += (piece.end - piece.start) * g;
        }
        Ok(total / horizon)
    }
}

/// Emergency-department style trace: proportional balking rates
/// `4 (2 - p) / (1 + k)` with `mu = 2` and `K = 30`, scaled by a week factor
/// and a half-hourly multiplier. Time is in hours.
///
/// `week_grid` holds `b_{d,t}` for one or more days (48 slots each) and is
/// cycled; it defaults to [`synthetic_week`].
pub fn build_ed_trace(weeks: usize, p: f64, week_grid: Option<&[f64]>) -> Result<Trace, SimError> {
    if weeks == 0 {
        return Err(SimError::InvalidTrace("weeks must be at least 1".into()));
    }
    let base = scenario_preset("appendix_linear", &ScenarioParams::new())?.with_id("ed_balking");
    if !base.price_range().contains(p) {
        return Err(SimError::InvalidTrace(format!("price {p} outside the valid range (0, 2)")));
    }
    let synthetic;
    let b = match week_grid {
        Some(g) => g,
        None => {
            synthetic = synthetic_week();
            &synthetic
        }
    };
    if b.is_empty() || b.len() % SLOTS_PER_DAY != 0 {
        return Err(SimError::InvalidTrace(format!(
            "multiplier grid must hold whole days of {SLOTS_PER_DAY} slots, got {}",
            b.len()
        )));
    }
    let week_slots = 7 * SLOTS_PER_DAY;
    let multipliers = (0..weeks * week_slots).map(|i| week_factor(i / week_slots) * b[i % b.len()]).collect();
    Trace::grid(base, multipliers, SLOT_HOURS)
}

#[derive(Debug, Serialize, Deserialize)]
struct GridRow {
    day: usize,
    slot: usize,
    multiplier: f64,
}

/// Reads a `day,slot,multiplier` grid. Days must run `0..D` with all 48
/// slots present exactly once.
pub fn read_grid_csv<R: Read>(input: R) -> Result<Vec<f64>, SimError> {
    let mut r = csv::Reader::from_reader(input);
    let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, row) in r.deserialize::<GridRow>().enumerate() {
        let row = row.map_err(|e| SimError::BadTraceCsv(format!("row {}: {e}", i + 1)))?;
        if row.slot >= SLOTS_PER_DAY {
            return Err(SimError::BadTraceCsv(format!("row {}: slot {} out of range", i + 1, row.slot)));
        }
        if !(row.multiplier > 0.0 && row.multiplier.is_finite()) {
            return Err(SimError::BadTraceCsv(format!(
                "row {}: multiplier must be positive, got {}",
                i + 1,
                row.multiplier
            )));
        }
        if cells.insert((row.day, row.slot), row.multiplier).is_some() {
            return Err(SimError::BadTraceCsv(format!("row {}: duplicate cell ({}, {})", i + 1, row.day, row.slot)));
        }
    }
    let days = cells.keys().map(|(d, _)| d + 1).max().unwrap_or(0);
    if days == 0 || cells.len() != days * SLOTS_PER_DAY {
        return Err(SimError::BadTraceCsv(format!(
            "expected {} cells for {days} days, got {}",
            days * SLOTS_PER_DAY,
            cells.len()
        )));
    }
    Ok(cells.into_values().collect())
}

pub fn write_grid_csv<W: Write>(multipliers: &[f64], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for (i, m) in multipliers.iter().enumerate() {
        w.serialize(GridRow { day: i / SLOTS_PER_DAY, slot: i % SLOTS_PER_DAY, multiplier: *m })?;
    }
    w.flush().map_err(|e| SimError::Io(e.to_string()))?;
    Ok(())
}
