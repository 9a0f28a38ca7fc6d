use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::model::PriceRange;

/// Which of the two perturbed prices is in force, or the unperturbed price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PriceLabel {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
    #[serde(rename = "base")]
    Base,
}

impl PriceLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PriceLabel::Plus => "+",
            PriceLabel::Minus => "-",
            PriceLabel::Base => "base",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "+" => Some(PriceLabel::Plus),
            "-" => Some(PriceLabel::Minus),
            "base" => Some(PriceLabel::Base),
            _ => None,
        }
    }

    /// Price under this label for base price `p` and perturbation `zeta`.
    pub fn price(self, p: f64, zeta: f64) -> f64 {
        match self {
            PriceLabel::Plus => p + zeta,
            PriceLabel::Minus => p - zeta,
            PriceLabel::Base => p,
        }
    }

    fn coin<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random::<bool>() {
            PriceLabel::Plus
        } else {
            PriceLabel::Minus
        }
    }
}

impl fmt::Display for PriceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How interval switchbacks assign prices to intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Assignment {
    /// Independent fair coin per interval.
    #[default]
    IidCoin,
    /// Random permutation of `ceil(n/2)` `+` and `floor(n/2)` `-` labels.
    BalancedPermutation,
    /// Fair coin while balanced; otherwise pick the under-represented arm
    /// with probability `bias`.
    EfronBiasedCoin { bias: f64 },
}

/// Experiment protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Design {
    FixedPrice {
        p: f64,
    },
    /// Price fixed on `[z l, (z+1) l)`, re-drawn at each boundary.
    IntervalSwitchback {
        p: f64,
        zeta: f64,
        interval_length: f64,
        #[serde(default)]
        assignment: Assignment,
    },
    /// Price re-drawn every time the queue enters `regeneration_state`.
    RegenerativeSwitchback {
        p: f64,
        zeta: f64,
        #[serde(default)]
        regeneration_state: usize,
    },
    /// Each arriving customer independently sees `p + zeta` or `p - zeta`.
    UserLevel {
        p: f64,
        zeta: f64,
    },
}

impl Design {
    pub fn price(&self) -> f64 {
        match *self {
            Design::FixedPrice { p }
            | Design::IntervalSwitchback { p, .. }
            | Design::RegenerativeSwitchback { p, .. }
            | Design::UserLevel { p, .. } => p,
        }
    }

    /// Price perturbation; zero for a fixed-price run.
    pub fn zeta(&self) -> f64 {
        match *self {
            Design::FixedPrice { .. } => 0.0,
            Design::IntervalSwitchback { zeta, .. }
            | Design::RegenerativeSwitchback { zeta, .. }
            | Design::UserLevel { zeta, .. } => zeta,
        }
    }

    pub fn is_switchback(&self) -> bool {
        matches!(self, Design::IntervalSwitchback { .. } | Design::RegenerativeSwitchback { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Design::FixedPrice { .. } => "fixed_price",
            Design::IntervalSwitchback { .. } => "interval_switchback",
            Design::RegenerativeSwitchback { .. } => "regenerative_switchback",
            Design::UserLevel { .. } => "user_level",
        }
    }

    pub fn validate(&self, range: PriceRange, capacity: usize) -> Result<(), SimError> {
        let p = self.price();
        let zeta = self.zeta();
        if !range.contains(p) {
            return Err(SimError::InvalidDesign(format!("price {p} outside ({}, {})", range.low, range.high)));
        }
        if !matches!(self, Design::FixedPrice { .. }) {
            if !(zeta > 0.0) {
                return Err(SimError::InvalidDesign(format!("zeta must be positive, got {zeta}")));
            }
            if !range.contains(p + zeta) || !range.contains(p - zeta) {
                return Err(SimError::InvalidDesign(format!(
                    "p +/- zeta = [{}, {}] leaves the valid range ({}, {})",
                    p - zeta,
                    p + zeta,
                    range.low,
                    range.high
                )));
            }
        }
        match *self {
            Design::IntervalSwitchback { interval_length, assignment, .. } => {
                if !(interval_length > 0.0) {
                    return Err(SimError::InvalidDesign(format!(
                        "interval length must be positive, got {interval_length}"
                    )));
                }
                if let Assignment::EfronBiasedCoin { bias } = assignment {
                    if !(0.0..=1.0).contains(&bias) {
                        return Err(SimError::InvalidDesign(format!("Efron bias must lie in [0, 1], got {bias}")));
                    }
                }
            }
            Design::RegenerativeSwitchback { regeneration_state, .. } if regeneration_state > capacity => {
                return Err(SimError::InvalidDesign(format!(
                    "regeneration state {regeneration_state} exceeds capacity {capacity}"
                )));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Price labels for `num_intervals` consecutive switchback intervals.
pub fn assignment_sequence<R: Rng + ?Sized>(
    assignment: Assignment,
    num_intervals: usize,
    rng: &mut R,
) -> Vec<PriceLabel> {
    match assignment {
        Assignment::IidCoin => (0..num_intervals).map(|_| PriceLabel::coin(rng)).collect(),
        Assignment::BalancedPermutation => {
            let plus = num_intervals.div_ceil(2);
            let mut labels: Vec<PriceLabel> =
                (0..num_intervals).map(|i| if i < plus { PriceLabel::Plus } else { PriceLabel::Minus }).collect();
            labels.shuffle(rng);
            labels
        }
        Assignment::EfronBiasedCoin { bias } => {
            let mut balance: i64 = 0;
            let mut labels = Vec::with_capacity(num_intervals);
            for _ in 0..num_intervals {
                let label = if balance == 0 {
                    PriceLabel::coin(rng)
                } else {
                    let lagging = if balance > 0 { PriceLabel::Minus } else { PriceLabel::Plus };
                    let leading = if balance > 0 { PriceLabel::Plus } else { PriceLabel::Minus };
                    if rng.random::<f64>() < bias {
                        lagging
                    } else {
                        leading
                    }
                };
                balance += if label == PriceLabel::Plus { 1 } else { -1 };
                labels.push(label);
            }
            labels
        }
    }
}
