use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Evaluator `(state, price) -> value`.
pub type RateFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

/// Evaluator `(state, mu, price) -> join probability`.
pub type JoinProbFn = Arc<dyn Fn(usize, f64, f64) -> f64 + Send + Sync>;

/// Open price interval `(low, high)` on which a model is declared valid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceRange {
    pub low: f64,
    pub high: f64,
}

impl PriceRange {
    pub const fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub fn contains(&self, p: f64) -> bool {
        p > self.low && p < self.high
    }

    /// Evenly spaced interior points, endpoints excluded.
    pub fn interior_grid(&self, n: usize) -> Vec<f64> {
        let lo = if self.low.is_finite() { self.low } else { -1.0e3 };
        let hi = if self.high.is_finite() { self.high } else { 1.0e3 };
        (1..=n).map(|i| lo + (hi - lo) * i as f64 / (n + 1) as f64).collect()
    }
}

impl Default for PriceRange {
    fn default() -> Self {
        Self::new(0.0, 2.0)
    }
}

/// How arrival rates respond to price for a separable table `lambda_k(1) * f(p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriceFamily {
    /// `f(p) = 2 - p`
    #[default]
    Linear,
    /// `f(p) = (2 - p) + (1 - p)^2`
    Quadratic,
    /// `f(p) = 1`: price-insensitive.
    Constant,
}

impl PriceFamily {
    pub fn factor(self, p: f64) -> f64 {
        match self {
            PriceFamily::Linear => 2.0 - p,
            PriceFamily::Quadratic => (2.0 - p) + (1.0 - p) * (1.0 - p),
            PriceFamily::Constant => 1.0,
        }
    }

    pub fn derivative(self, p: f64) -> f64 {
        match self {
            PriceFamily::Linear => -1.0,
            PriceFamily::Quadratic => -1.0 - 2.0 * (1.0 - p),
            PriceFamily::Constant => 0.0,
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "linear" => Some(Self::Linear),
            "quadratic" => Some(Self::Quadratic),
            "constant" => Some(Self::Constant),
            _ => None,
        }
    }
}

/// Where a model came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ClosedForm,
    JoinProbability,
    StateDependentPricing,
    Preset(String),
}

/// A state-dependent arrival environment for a single exponential server.
///
/// Arrival rates `lambda_k(p)` are defined for `k < capacity`; queries at
/// `k >= capacity` return zero so the queue never exceeds `capacity`.
#[derive(Clone)]
pub struct RateModel {
    id: String,
    mu: f64,
    capacity: usize,
    rates: RateFn,
    derivatives: Option<RateFn>,
    price_range: PriceRange,
    kind: ModelKind,
}

impl fmt::Debug for RateModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RateModel")
            .field("id", &self.id)
            .field("mu", &self.mu)
            .field("capacity", &self.capacity)
            .field("price_range", &self.price_range)
            .field("kind", &self.kind)
            .field("analytic_derivatives", &self.derivatives.is_some())
            .finish()
    }
}

impl RateModel {
    pub fn new(
        id: impl Into<String>,
        mu: f64,
        capacity: usize,
        rates: RateFn,
        price_range: PriceRange,
    ) -> Result<Self, ModelError> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(ModelError::InvalidParameter(format!("service rate must be positive, got {mu}")));
        }
        if capacity == 0 {
            return Err(ModelError::InvalidParameter("capacity K must be at least 1".into()));
        }
        if !(price_range.low < price_range.high) {
            return Err(ModelError::InvalidParameter(format!(
                "empty price range ({}, {})",
                price_range.low, price_range.high
            )));
        }
        Ok(Self { id: id.into(), mu, capacity, rates, derivatives: None, price_range, kind: ModelKind::ClosedForm })
    }

    /// Separable table `lambda_k(p) = base[k] * family(p)` with analytic derivatives.
    pub fn from_table(id: impl Into<String>, mu: f64, base: Vec<f64>, family: PriceFamily) -> Result<Self, ModelError> {
        let capacity = base.len();
        let table = Arc::new(base);
        let t1 = Arc::clone(&table);
        let t2 = Arc::clone(&table);
        let model = Self::new(id, mu, capacity, Arc::new(move |k, p| t1[k] * family.factor(p)), PriceRange::default())?;
        Ok(model.with_derivatives(Arc::new(move |k, p| t2[k] * family.derivative(p))))
    }

    pub fn with_derivatives(mut self, derivatives: RateFn) -> Self {
        self.derivatives = Some(derivatives);
        self
    }

    /// Same model with derivatives left to central differencing.
    pub fn without_derivatives(&self) -> Self {
        let mut m = self.clone();
        m.derivatives = None;
        m
    }

    pub fn with_kind(mut self, kind: ModelKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_price_range(mut self, range: PriceRange) -> Self {
        self.price_range = range;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Maximum queue length `K`.
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn price_range(&self) -> PriceRange {
        self.price_range
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.derivatives.is_some()
    }

    /// `lambda_k(p)`; zero for `k >= K`.
    pub fn rate(&self, k: usize, p: f64) -> f64 {
        if k >= self.capacity {
            0.0
        } else {
            (self.rates)(k, p)
        }
    }

    /// `lambda'_k(p)`, analytic when attached, otherwise a central difference
    /// with step `1e-6 * max(1, |p|)`.
    pub fn rate_derivative(&self, k: usize, p: f64) -> f64 {
        if k >= self.capacity {
            return 0.0;
        }
        match &self.derivatives {
            Some(d) => d(k, p),
            None => {
                let h = derivative_step(p);
                ((self.rates)(k, p + h) - (self.rates)(k, p - h)) / (2.0 * h)
            }
        }
    }

    /// Rates `lambda_0(p) .. lambda_{K-1}(p)`.
    pub fn rate_table(&self, p: f64) -> Vec<f64> {
        (0..self.capacity).map(|k| self.rate(k, p)).collect()
    }

    pub fn check_price(&self, p: f64) -> Result<(), ModelError> {
        if self.price_range.contains(p) {
            Ok(())
        } else {
            Err(ModelError::InvalidPrice { p, low: self.price_range.low, high: self.price_range.high })
        }
    }

    /// Multiplies every arrival rate and the service rate by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self, ModelError> {
        if !(c > 0.0) {
            return Err(ModelError::InvalidParameter(format!("scale factor must be positive, got {c}")));
        }
        let mut m = self.scaled_arrivals(c)?;
        m.mu = self.mu * c;
        Ok(m)
    }

    /// Multiplies every arrival rate by `c`, leaving the service rate alone.
    pub fn scaled_arrivals(&self, c: f64) -> Result<Self, ModelError> {
        if !(c > 0.0) {
            return Err(ModelError::InvalidParameter(format!("arrival multiplier must be positive, got {c}")));
        }
        let rates = Arc::clone(&self.rates);
        let mut m = self.clone();
        m.rates = Arc::new(move |k, p| c * rates(k, p));
        m.derivatives = self.derivatives.as_ref().map(|d| {
            let d = Arc::clone(d);
            Arc::new(move |k, p| c * d(k, p)) as RateFn
        });
        Ok(m)
    }

    /// Wraps `inner` for state-dependent pricing: in state `k` the posted price
    /// is `base_prices[k] * p`, so `lambda_k(p) = inner.rate(k, b_k p)`.
    pub fn state_dependent_pricing(inner: &RateModel, base_prices: Vec<f64>) -> Result<Self, ModelError> {
        if base_prices.len() != inner.capacity {
            return Err(ModelError::InvalidParameter(format!(
                "need {} base prices, got {}",
                inner.capacity,
                base_prices.len()
            )));
        }
        if let Some(b) = base_prices.iter().find(|b| !(**b > 0.0)) {
            return Err(ModelError::InvalidParameter(format!("base prices must be positive, got {b}")));
        }
        let r = inner.price_range;
        let low = base_prices.iter().map(|b| r.low / b).fold(f64::MIN, f64::max);
        let high = base_prices.iter().map(|b| r.high / b).fold(f64::MAX, f64::min);
        let base = Arc::new(base_prices);
        let b1 = Arc::clone(&base);
        let rates = Arc::clone(&inner.rates);
        let mut model = Self::new(
            format!("{}+state_pricing", inner.id),
            inner.mu,
            inner.capacity,
            Arc::new(move |k, p| rates(k, b1[k] * p)),
            PriceRange::new(low, high),
        )?
        .with_kind(ModelKind::StateDependentPricing);
        if let Some(d) = &inner.derivatives {
            let d = Arc::clone(d);
            let b2 = Arc::clone(&base);
            model = model.with_derivatives(Arc::new(move |k, p| b2[k] * d(k, b2[k] * p)));
        }
        Ok(model)
    }
}

/// Central-difference step used wherever an analytic derivative is missing.
pub fn derivative_step(p: f64) -> f64 {
    1.0e-6 * p.abs().max(1.0)
}

/// `lambda_k(p) = lambda_raw * prob(k, mu, p)` for customers who join after
/// seeing the queue length and price.
///
/// `prob` is checked on a grid of prices in `price_range`; any value outside
/// `[0, 1]` is rejected.
pub fn join_probability_model(
    lambda_raw: f64,
    prob: JoinProbFn,
    mu: f64,
    capacity: usize,
    price_range: PriceRange,
) -> Result<RateModel, ModelError> {
    if !(lambda_raw > 0.0) {
        return Err(ModelError::InvalidParameter(format!("raw arrival rate must be positive, got {lambda_raw}")));
    }
    for p in price_range.interior_grid(101) {
        for k in 0..capacity {
            let v = prob(k, mu, p);
            if !(0.0..=1.0).contains(&v) {
                return Err(ModelError::InvalidProbability { k, p, value: v });
            }
        }
    }
    let model = RateModel::new(
        "join_probability",
        mu,
        capacity,
        Arc::new(move |k, p| lambda_raw * prob(k, mu, p)),
        price_range,
    )?;
    Ok(model.with_kind(ModelKind::JoinProbability))
}

/// Waiting-cost joining rule with utility `u ~ Uniform[0, max_utility]` and a
/// fixed waiting cost: a customer joins iff `u >= cost * k / mu + p`.
pub fn waiting_cost_model(
    lambda_raw: f64,
    max_utility: f64,
    cost: f64,
    mu: f64,
    capacity: usize,
) -> Result<RateModel, ModelError> {
    if !(max_utility > 0.0) || cost < 0.0 {
        return Err(ModelError::InvalidParameter("waiting-cost model needs max_utility > 0 and cost >= 0".into()));
    }
    let threshold = move |k: usize, mu: f64, p: f64| (max_utility - cost * k as f64 / mu - p) / max_utility;
    let prob: JoinProbFn = Arc::new(move |k, mu, p| threshold(k, mu, p).clamp(0.0, 1.0));
    let model = join_probability_model(lambda_raw, prob, mu, capacity, PriceRange::new(0.0, max_utility))?;
    Ok(model.with_id("waiting_cost").with_derivatives(Arc::new(move |k, p| {
        let x = threshold(k, mu, p);
        if x > 0.0 && x < 1.0 {
            -lambda_raw / max_utility
        } else {
            0.0
        }
    })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_vanish_at_capacity() {
        let m = RateModel::from_table("t", 1.0, vec![0.5, 0.5], PriceFamily::Linear).unwrap();
        assert_eq!(m.rate(2, 1.0), 0.0);
        assert_eq!(m.rate(7, 1.0), 0.0);
        assert_eq!(m.rate_derivative(2, 1.0), 0.0);
        assert_eq!(m.rate(1, 1.0), 0.5);
    }

    #[test]
    fn numeric_derivative_matches_analytic() {
        let m = RateModel::from_table("t", 1.0, vec![0.7, 0.3], PriceFamily::Quadratic).unwrap();
        let n = m.without_derivatives();
        for p in [0.3, 1.0, 1.7] {
            for k in 0..2 {
                assert!((m.rate_derivative(k, p) - n.rate_derivative(k, p)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn constant_join_probability_is_identity() {
        let m = join_probability_model(1.3, Arc::new(|_, _, _| 1.0), 1.0, 4, PriceRange::default()).unwrap();
        for k in 0..4 {
            assert_eq!(m.rate(k, 0.5), 1.3);
        }
    }

    #[test]
    fn proportional_balking_from_join_rule() {
        let m = join_probability_model(3.0, Arc::new(|k, _, _| 1.0 / (k as f64 + 1.0)), 2.0, 10, PriceRange::default())
            .unwrap();
        for k in 0..10 {
            assert!((m.rate(k, 1.0) - 3.0 / (k as f64 + 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn join_probability_out_of_range_is_rejected() {
        let err = join_probability_model(1.0, Arc::new(|_, _, p| p), 1.0, 2, PriceRange::default()).unwrap_err();
        assert!(matches!(err, ModelError::InvalidProbability { .. }));
    }

    #[test]
    fn waiting_cost_probability() {
        let m = waiting_cost_model(2.0, 4.0, 1.0, 1.0, 3).unwrap();
        // prob = (4 - k - p) / 4
        assert!((m.rate(0, 1.0) - 2.0 * 0.75).abs() < 1e-15);
        assert!((m.rate(2, 1.0) - 2.0 * 0.25).abs() < 1e-15);
        assert!((m.rate_derivative(1, 1.0) + 0.5).abs() < 1e-15);
        assert!((m.without_derivatives().rate_derivative(1, 1.0) + 0.5).abs() < 1e-8);
    }

    #[test]
    fn state_dependent_pricing_rescales_price() {
        let inner = RateModel::from_table("t", 1.0, vec![1.0, 1.0], PriceFamily::Linear).unwrap();
        let m = RateModel::state_dependent_pricing(&inner, vec![1.0, 0.5]).unwrap();
        assert!((m.rate(1, 1.0) - 1.5).abs() < 1e-15);
        assert!((m.rate_derivative(1, 1.0) + 0.5).abs() < 1e-15);
        assert_eq!(m.price_range(), PriceRange::new(0.0, 2.0));
    }
}
