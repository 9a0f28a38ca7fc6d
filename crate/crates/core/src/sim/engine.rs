use rand::Rng;
use rand_distr::Exp1;

use super::{assignment_sequence, Design, Event, EventKind, EventLog, LogHeader, Piece, PriceLabel, SimError, Trace};
use crate::model::{PriceRange, RateModel};
use crate::rng::{derive_stream, SimRng};

/// What the queue is simulated against.
#[derive(Debug, Clone)]
pub enum Environment {
    Stationary(RateModel),
    Trace(Trace),
}

impl Environment {
    pub fn mu(&self) -> f64 {
        match self {
            Environment::Stationary(m) => m.mu(),
            Environment::Trace(t) => t.mu(),
        }
    }

    pub fn capacity(&self) -> usize {
        match self {
            Environment::Stationary(m) => m.capacity(),
            Environment::Trace(t) => t.capacity(),
        }
    }

    pub fn price_range(&self) -> PriceRange {
        match self {
            Environment::Stationary(m) => m.price_range(),
            Environment::Trace(t) => t.price_range(),
        }
    }

    pub fn id(&self) -> String {
        match self {
            Environment::Stationary(m) => m.id().to_string(),
            Environment::Trace(t) => t.id(),
        }
    }

    fn regimes(&self) -> &[RateModel] {
        match self {
            Environment::Stationary(m) => std::slice::from_ref(m),
            Environment::Trace(t) => t.regimes(),
        }
    }

    fn pieces(&self, horizon: f64) -> Vec<Piece> {
        match self {
            Environment::Stationary(_) => vec![Piece { start: 0.0, end: horizon, regime: 0, multiplier: 1.0 }],
            Environment::Trace(t) => t.pieces(horizon),
        }
    }
}

impl From<RateModel> for Environment {
    fn from(m: RateModel) -> Self {
        Environment::Stationary(m)
    }
}

impl From<Trace> for Environment {
    fn from(t: Trace) -> Self {
        Environment::Trace(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOptions {
    pub initial_state: usize,
    /// Time run at the base price before `t = 0`; only the end state is kept.
    pub burn_in: f64,
}

/// Rate tables of one regime at the three prices a design can post.
struct Tables {
    base: Vec<f64>,
    plus: Vec<f64>,
    minus: Vec<f64>,
}

struct Chain<'a> {
    tables: Vec<Tables>,
    mu: f64,
    capacity: usize,
    user_level: bool,
    rng: &'a mut SimRng,
}

impl Chain<'_> {
    /// Effective arrival rate in state `k` under `label`.
    fn arrival_rate(&self, regime: usize, mult: f64, k: usize, label: PriceLabel) -> f64 {
        if k >= self.capacity {
            return 0.0;
        }
        let t = &self.tables[regime];
        let r = if self.user_level {
            0.5 * (t.plus[k] + t.minus[k])
        } else {
            match label {
                PriceLabel::Plus => t.plus[k],
                PriceLabel::Minus => t.minus[k],
                PriceLabel::Base => t.base[k],
            }
        };
        mult * r
    }

    /// Draws the next transition before `until`. Returns `None` if the clock
    /// runs past `until`, otherwise the event time and whether it is an
    /// arrival.
    fn step(&mut self, t: f64, until: f64, arrival: f64, k: usize) -> Option<(f64, bool)> {
        let service = if k > 0 { self.mu } else { 0.0 };
        let total = arrival + service;
        let e: f64 = self.rng.sample(Exp1);
        let next = t + e / total;
        if next >= until {
            return None;
        }
        let is_arrival = self.rng.random::<f64>() * total < arrival;
        Some((next, is_arrival))
    }

    fn user_label(&mut self, regime: usize, k: usize) -> PriceLabel {
        let t = &self.tables[regime];
        if self.rng.random::<f64>() * (t.plus[k] + t.minus[k]) < t.plus[k] {
            PriceLabel::Plus
        } else {
            PriceLabel::Minus
        }
    }
}

fn coin(rng: &mut SimRng) -> PriceLabel {
    if rng.random::<bool>() {
        PriceLabel::Plus
    } else {
        PriceLabel::Minus
    }
}

/// Simulates the queue on `[0, horizon]` with exact competing exponential
/// clocks. Clocks are cut at interval boundaries and rate changes and redrawn
/// afterwards. Identical inputs give identical logs.
pub fn simulate(
    env: &Environment,
    design: &Design,
    horizon: f64,
    seed: u64,
    stream: u64,
    opts: SimOptions,
) -> Result<EventLog, SimError> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(SimError::InvalidHorizon(horizon));
    }
    if !(opts.burn_in >= 0.0 && opts.burn_in.is_finite()) {
        return Err(SimError::InvalidHorizon(opts.burn_in));
    }
    let capacity = env.capacity();
    if opts.initial_state > capacity {
        return Err(SimError::InvalidInitialState { state: opts.initial_state, capacity });
    }
    design.validate(env.price_range(), capacity)?;
    let (p, zeta) = (design.price(), design.zeta());

    let mut tables = Vec::new();
    for m in env.regimes() {
        let table = |q: f64| -> Result<Vec<f64>, SimError> {
            let r = m.rate_table(q);
            if let Some((k, &rate)) = r.iter().enumerate().find(|(_, r)| !(**r > 0.0 && r.is_finite())) {
                return Err(crate::model::ModelError::NonPositiveRate { k, p: q, rate }.into());
            }
            Ok(r)
        };
        tables.push(Tables { base: table(p)?, plus: table(p + zeta)?, minus: table(p - zeta)? });
    }

    let mut rng = derive_stream(seed, stream);
    let user_level = matches!(design, Design::UserLevel { .. });

    let mut labels = Vec::new();
    let mut label = match *design {
        Design::FixedPrice { .. } | Design::UserLevel { .. } => PriceLabel::Base,
        Design::IntervalSwitchback { interval_length, assignment, .. } => {
            let n = ((horizon / interval_length).ceil() as usize).max(1);
            labels = assignment_sequence(assignment, n, &mut rng);
            labels[0]
        }
        Design::RegenerativeSwitchback { .. } => coin(&mut rng),
    };
    let initial_label = label;

    let mut chain = Chain { tables, mu: env.mu(), capacity, user_level, rng: &mut rng };

    let pieces = env.pieces(horizon);
    let mut state = opts.initial_state;
    if opts.burn_in > 0.0 {
        let (regime, mult) = pieces.first().map_or((0, 1.0), |pc| (pc.regime, pc.multiplier));
        let mut t = 0.0;
        loop {
            let r = mult * chain.tables[regime].base.get(state).copied().unwrap_or(0.0);
            match chain.step(t, opts.burn_in, r, state) {
                None => break,
                Some((next, arrival)) => {
                    t = next;
                    if arrival {
                        state += 1;
                    } else {
                        state -= 1;
                    }
                }
            }
        }
    }
    let initial_state = state;

    let mut events = Vec::new();
    let mut next_interval = 1usize;
    let interval_length = match *design {
        Design::IntervalSwitchback { interval_length, .. } => Some(interval_length),
        _ => None,
    };
    let regeneration = match *design {
        Design::RegenerativeSwitchback { regeneration_state, .. } => Some(regeneration_state),
        _ => None,
    };

    let mut t = 0.0;
    for piece in &pieces {
        loop {
            let switch_at = match interval_length {
                Some(l) if next_interval < labels.len() => next_interval as f64 * l,
                _ => f64::INFINITY,
            };
            let until = piece.end.min(switch_at);
            let rate = chain.arrival_rate(piece.regime, piece.multiplier, state, label);
            match chain.step(t, until, rate, state) {
                Some((next, arrival)) => {
                    t = next;
                    if arrival {
                        let l = if user_level { chain.user_label(piece.regime, state) } else { label };
                        events.push(Event { t, kind: EventKind::Arrival { pre_state: state, label: l } });
                        state += 1;
                    } else {
                        events.push(Event { t, kind: EventKind::Departure { pre_state: state } });
                        state -= 1;
                    }
                    if regeneration == Some(state) {
                        let l = coin(chain.rng);
                        if l != label {
                            label = l;
                            events.push(Event { t, kind: EventKind::PriceSwitch { state, label } });
                        }
                    }
                }
                None if switch_at <= piece.end && switch_at < horizon => {
                    t = switch_at;
                    let l = labels[next_interval];
                    next_interval += 1;
                    if l != label {
                        label = l;
                        events.push(Event { t, kind: EventKind::PriceSwitch { state, label } });
                    }
                }
                None => {
                    t = piece.end;
                    break;
                }
            }
        }
    }

    Ok(EventLog {
        header: LogHeader {
            horizon,
            initial_state,
            initial_label,
            seed,
            stream,
            design: *design,
            model_id: env.id(),
            mu: env.mu(),
            capacity,
        },
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{scenario_preset, steady_state, ScenarioParams};
    use crate::sim::Assignment;

    fn mm1() -> RateModel {
        scenario_preset("mm1", &ScenarioParams::new()).unwrap()
    }

    fn occupancy(log: &EventLog) -> Vec<f64> {
        let mut occ = vec![0.0; log.header.capacity + 1];
        let (mut s, mut t) = (log.header.initial_state, 0.0);
        for e in &log.events {
            occ[s] += e.t - t;
            t = e.t;
            match e.kind {
                EventKind::Arrival { .. } => s += 1,
                EventKind::Departure { .. } => s -= 1,
                EventKind::PriceSwitch { .. } => {}
            }
        }
        occ[s] += log.horizon() - t;
        occ
    }

    #[test]
    fn zero_horizon_is_empty() {
        let log = simulate(&mm1().into(), &Design::FixedPrice { p: 1.0 }, 0.0, 1, 0, SimOptions::default()).unwrap();
        assert!(log.events.is_empty());
        log.validate().unwrap();
    }

    #[test]
    fn deterministic() {
        let env: Environment = mm1().into();
        let d = Design::UserLevel { p: 1.0, zeta: 0.1 };
        let a = simulate(&env, &d, 500.0, 7, 3, SimOptions::default()).unwrap();
        let b = simulate(&env, &d, 500.0, 7, 3, SimOptions::default()).unwrap();
        assert_eq!(a, b);
        let c = simulate(&env, &d, 500.0, 7, 4, SimOptions::default()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fixed_price_idle_fraction() {
        let log = simulate(&mm1().into(), &Design::FixedPrice { p: 1.0 }, 1e5, 11, 0, SimOptions::default()).unwrap();
        log.validate().unwrap();
        let occ = occupancy(&log);
        let pi0 = steady_state(&mm1(), 1.0).unwrap().pi[0];
        assert!((occ[0] / 1e5 - pi0).abs() < 0.01);
    }

    #[test]
    fn every_design_produces_valid_logs() {
        let designs = [
            Design::FixedPrice { p: 1.0 },
            Design::IntervalSwitchback { p: 1.0, zeta: 0.2, interval_length: 7.0, assignment: Assignment::IidCoin },
            Design::IntervalSwitchback {
                p: 1.0,
                zeta: 0.2,
                interval_length: 50.0,
                assignment: Assignment::BalancedPermutation,
            },
            Design::RegenerativeSwitchback { p: 1.0, zeta: 0.2, regeneration_state: 0 },
            Design::RegenerativeSwitchback { p: 1.0, zeta: 0.2, regeneration_state: 2 },
            Design::UserLevel { p: 1.0, zeta: 0.2 },
        ];
        for d in designs {
            for seed in 0..5 {
                let opts = SimOptions { initial_state: 3, burn_in: 5.0 };
                let log = simulate(&mm1().into(), &d, 200.0, seed, 0, opts).unwrap();
                log.validate().unwrap_or_else(|e| panic!("{}: {e}", d.name()));
            }
        }
    }

    #[test]
    fn two_interval_switchback_switches_at_midpoint() {
        let d = Design::IntervalSwitchback {
            p: 1.0,
            zeta: 0.1,
            interval_length: 50.0,
            assignment: Assignment::BalancedPermutation,
        };
        for seed in 0..10 {
            let log = simulate(&mm1().into(), &d, 100.0, seed, 0, SimOptions::default()).unwrap();
            let switches: Vec<&Event> =
                log.events.iter().filter(|e| matches!(e.kind, EventKind::PriceSwitch { .. })).collect();
            assert_eq!(switches.len(), 1);
            assert_eq!(switches[0].t, 50.0);
        }
    }

    #[test]
    fn regenerative_switches_only_at_regeneration_state() {
        let d = Design::RegenerativeSwitchback { p: 1.0, zeta: 0.1, regeneration_state: 1 };
        let log = simulate(&mm1().into(), &d, 2000.0, 5, 0, SimOptions::default()).unwrap();
        let mut n = 0;
        for e in &log.events {
            if let EventKind::PriceSwitch { state, .. } = e.kind {
                assert_eq!(state, 1);
                n += 1;
            }
        }
        assert!(n > 10);
    }

    #[test]
    fn rejects_bad_inputs() {
        let env: Environment = mm1().into();
        let d = Design::FixedPrice { p: 1.0 };
        assert!(matches!(simulate(&env, &d, -1.0, 0, 0, SimOptions::default()), Err(SimError::InvalidHorizon(_))));
        assert!(matches!(
            simulate(&env, &d, 1.0, 0, 0, SimOptions { initial_state: 31, burn_in: 0.0 }),
            Err(SimError::InvalidInitialState { .. })
        ));
        assert!(matches!(
            simulate(&env, &Design::UserLevel { p: 1.9, zeta: 0.2 }, 1.0, 0, 0, SimOptions::default()),
            Err(SimError::InvalidDesign(_))
        ));
    }

    #[test]
    fn trace_with_unit_grid_matches_stationary_model() {
        let trace = super::super::build_ed_trace(1, 1.0, Some(&[1.0; 48])).unwrap();
        let Trace::Grid { base, .. } = &trace else { panic!() };
        let base = base.clone();
        // Week factor 0.9 applies to every slot of week one.
        let stationary = base.scaled_arrivals(0.9).unwrap();
        let horizon = 7.0 * 24.0;
        let mut occ = vec![0.0; 31];
        for stream in 0..40 {
            let log = simulate(
                &trace.clone().into(),
                &Design::FixedPrice { p: 1.0 },
                horizon,
                2,
                stream,
                SimOptions::default(),
            )
            .unwrap();
            for (a, b) in occ.iter_mut().zip(occupancy(&log)) {
                *a += b;
            }
        }
        let pi = steady_state(&stationary, 1.0).unwrap().pi;
        let total: f64 = occ.iter().sum();
        for k in 0..5 {
            assert!((occ[k] / total - pi[k]).abs() < 0.02, "k = {k}");
        }
    }
}
