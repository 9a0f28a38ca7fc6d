//! Queueing environments and their exact stationary quantities.
//!
//! The queue length is a birth-death chain on `{0, .., K}` with arrival rate
//! `lambda_k(p)` in state `k` and service rate `mu`. Everything here is a pure
//! function of a [`RateModel`] and a price.

mod presets;
mod rates;

pub use presets::{scenario_preset, ScenarioParams, ScenarioSpec, SCENARIO_NAMES};
pub use rates::{
    derivative_step, join_probability_model, waiting_cost_model, JoinProbFn, ModelKind, PriceFamily, PriceRange,
    RateFn, RateModel,
};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::numeric::{compensated_sum, tail_sums};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("arrival rate lambda_{k}({p}) = {rate} is not positive")]
    NonPositiveRate { k: usize, p: f64, rate: f64 },
    #[error("price {p} outside the valid range ({low}, {high})")]
    InvalidPrice { p: f64, low: f64, high: f64 },
    #[error("linear system is singular; generator is not irreducible")]
    SingularSystem,
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("join probability {value} at state {k}, price {p} is outside [0, 1]")]
    InvalidProbability { k: usize, p: f64, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Stationary distribution of the queue length at a fixed price.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    /// `pi_k(p)` for `k = 0..=K`.
    pub pi: Vec<f64>,
    /// `S_k(p) = sum_{j >= k} pi_j(p)`; `S_0 = 1`.
    pub tail_sums: Vec<f64>,
    /// `V(p) = sum_k pi_k lambda_k(p)`.
    pub throughput: f64,
    pub price: f64,
    pub mu: f64,
    /// `lambda_k(p)` for `k < K`.
    pub rates: Vec<f64>,
}

impl SteadyState {
    pub fn capacity(&self) -> usize {
        self.pi.len() - 1
    }

    pub fn idle_probability(&self) -> f64 {
        self.pi[0]
    }

    /// Throughput from customer conservation, `mu * (1 - pi_0)`.
    pub fn throughput_from_idle(&self) -> f64 {
        self.mu * (1.0 - self.pi[0])
    }
}

/// Steady state by the detailed-balance product `pi_k ∝ prod_{i<k} lambda_i / mu`,
/// accumulated in log space.
pub fn steady_state(model: &RateModel, p: f64) -> Result<SteadyState, ModelError> {
    model.check_price(p)?;
    let capacity = model.capacity();
    let rates = model.rate_table(p);
    if let Some((k, &rate)) = rates.iter().enumerate().find(|(_, r)| !(**r > 0.0) || !r.is_finite()) {
        return Err(ModelError::NonPositiveRate { k, p, rate });
    }
    let log_mu = model.mu().ln();
    let mut log_weights = Vec::with_capacity(capacity + 1);
    log_weights.push(0.0_f64);
    let mut acc = 0.0_f64;
    for &r in &rates {
        acc += r.ln() - log_mu;
        log_weights.push(acc);
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let z = compensated_sum(weights.iter().copied());
    let pi: Vec<f64> = weights.iter().map(|w| w / z).collect();
    let tails = tail_sums(&pi);
    let throughput = compensated_sum(rates.iter().zip(&pi).map(|(r, q)| r * q));
    Ok(SteadyState { pi, tail_sums: tails, throughput, price: p, mu: model.mu(), rates })
}

/// Tridiagonal generator `Q(p)` of the queue-length chain.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix(pub DMatrix<f64>);

/// Group inverse `Q#(p)`: `Q Q# = I - 1 pi^T` and `pi^T Q# = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupInverse(pub DMatrix<f64>);

pub fn rate_matrix(model: &RateModel, p: f64) -> Result<RateMatrix, ModelError> {
    let ss = steady_state(model, p)?;
    Ok(rate_matrix_from_rates(&ss.rates, model.mu()))
}

/// Generator built from `lambda_0..lambda_{K-1}` and `mu`; diagonal entries
/// are the negated off-diagonal row sums, so rows sum to exactly zero.
pub fn rate_matrix_from_rates(rates: &[f64], mu: f64) -> RateMatrix {
    let n = rates.len() + 1;
    let mut q = DMatrix::zeros(n, n);
    for k in 0..n {
        let up = if k < rates.len() { rates[k] } else { 0.0 };
        let down = if k > 0 { mu } else { 0.0 };
        if k + 1 < n {
            q[(k, k + 1)] = up;
        }
        if k > 0 {
            q[(k, k - 1)] = down;
        }
        q[(k, k)] = -(up + down);
    }
    RateMatrix(q)
}

/// Closed-form group inverse of the birth-death generator:
///
/// `Q#_{k,i} = (pi_i/mu) (-sum_{j=1}^{min(i,k)} 1/pi_j + c_k + c_i - D)`
/// with `c_k = sum_{j=1}^k S_j/pi_j` and `D = sum_{j=1}^K S_j^2/pi_j`.
pub fn group_inverse_closed_form(model: &RateModel, p: f64) -> Result<GroupInverse, ModelError> {
    let ss = steady_state(model, p)?;
    Ok(group_inverse_from_steady_state(&ss))
}

pub fn group_inverse_from_steady_state(ss: &SteadyState) -> GroupInverse {
    let n = ss.pi.len();
    let pi = &ss.pi;
    let s = &ss.tail_sums;
    let mut inv_pi_cum = vec![0.0; n];
    let mut c = vec![0.0; n];
    for j in 1..n {
        inv_pi_cum[j] = inv_pi_cum[j - 1] + 1.0 / pi[j];
        c[j] = c[j - 1] + s[j] / pi[j];
    }
    let d = compensated_sum((1..n).map(|j| s[j] * s[j] / pi[j]));
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n {
        for i in 0..n {
            a[(k, i)] = pi[i] / ss.mu * (-inv_pi_cum[i.min(k)] + c[k] + c[i] - d);
        }
    }
    GroupInverse(a)
}

/// Reference group inverse `-(1 pi^T - Q)^{-1} (I - 1 pi^T)` by a dense LU solve.
pub fn group_inverse_oracle(q: &RateMatrix, pi: &SteadyState) -> Result<GroupInverse, ModelError> {
    let n = q.0.nrows();
    if q.0.ncols() != n || pi.pi.len() != n {
        return Err(ModelError::InvalidParameter(format!(
            "dimension mismatch: Q is {}x{}, pi has {} entries",
            n,
            q.0.ncols(),
            pi.pi.len()
        )));
    }
    let ones_pi = DMatrix::from_fn(n, n, |_, j| pi.pi[j]);
    let m = &ones_pi - &q.0;
    let rhs = DMatrix::identity(n, n) - &ones_pi;
    let lu = m.lu();
    if !lu.is_invertible() {
        return Err(ModelError::SingularSystem);
    }
    let x = lu.solve(&rhs).ok_or(ModelError::SingularSystem)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::SingularSystem);
    }
    Ok(GroupInverse(-x))
}

/// Stationary distribution by solving `pi^T Q = 0, sum pi = 1` densely.
///
/// Independent of the product formula in [`steady_state`]; kept as a check.
pub fn steady_state_linear_solve(q: &RateMatrix) -> Result<Vec<f64>, ModelError> {
    let n = q.0.nrows();
    let mut a = q.0.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = nalgebra::DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(ModelError::SingularSystem)?;
    Ok(x.iter().copied().collect())
}
