use congestion_lab::estimate::{summarize, tau_ur, tau_wde, windowed_estimate, WindowKind};
use congestion_lab::gradient::{asymptotic_variance, policy_gradient, variances_from_distribution};
use congestion_lab::model::{
    group_inverse_closed_form, group_inverse_oracle, rate_matrix, scenario_preset, steady_state, PriceFamily,
    RateModel, ScenarioSpec, SCENARIO_NAMES,
};
use congestion_lab::sim::{simulate, Assignment, Design, Environment, EventKind, EventLog, SimOptions};
use proptest::prelude::*;

fn table_model(rates: Vec<f64>, mu: f64) -> RateModel {
    RateModel::from_table("prop", mu, rates, PriceFamily::Linear).unwrap()
}

fn rates_strategy(max_k: usize) -> impl Strategy<Value = (Vec<f64>, f64)> {
    (1..=max_k, 0.2f64..5.0).prop_flat_map(|(k, mu)| (prop::collection::vec(0.05f64..3.0, k), Just(mu)))
}

fn design_strategy() -> impl Strategy<Value = Design> {
    prop_oneof![
        Just(Design::FixedPrice { p: 1.0 }),
        (0.01f64..0.3, 0.5f64..20.0, 0usize..3).prop_map(|(zeta, l, a)| Design::IntervalSwitchback {
            p: 1.0,
            zeta,
            interval_length: l,
            assignment: match a {
                0 => Assignment::IidCoin,
                1 => Assignment::BalancedPermutation,
                _ => Assignment::EfronBiasedCoin { bias: 2.0 / 3.0 },
            },
        }),
        (0.01f64..0.3, 0usize..3).prop_map(|(zeta, r)| Design::RegenerativeSwitchback {
            p: 1.0,
            zeta,
            regeneration_state: r
        }),
        (0.01f64..0.3).prop_map(|zeta| Design::UserLevel { p: 1.0, zeta }),
    ]
}

fn sample_log(design: Design, seed: u64, horizon: f64) -> EventLog {
    let model = scenario_preset("mm1", &Default::default()).unwrap();
    simulate(&Environment::Stationary(model), &design, horizon, seed, 0, SimOptions::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steady_state_is_a_distribution((rates, mu) in rates_strategy(40), p in 0.1f64..1.9) {
        let m = table_model(rates, mu);
        let ss = steady_state(&m, p).unwrap();
        let total: f64 = ss.pi.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(ss.pi.iter().all(|q| *q > 0.0));
        prop_assert!((ss.throughput - ss.throughput_from_idle()).abs() < 1e-10 * (1.0 + ss.throughput));
        prop_assert!((ss.tail_sums[0] - 1.0).abs() < 1e-12);
        for k in 0..ss.capacity() {
            let lhs = ss.pi[k] * ss.rates[k];
            let rhs = ss.pi[k + 1] * mu;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(rhs).max(1e-300));
        }
    }

    #[test]
    fn group_inverse_matches_oracle(
        (ratios, mu) in (1usize..=30, 0.2f64..5.0)
            .prop_flat_map(|(k, mu)| (prop::collection::vec(0.3f64..1.7, k), Just(mu)))
    ) {
        let m = table_model(ratios.iter().map(|r| r * mu).collect(), mu);
        let ss = steady_state(&m, 1.0).unwrap();
        let closed = group_inverse_closed_form(&m, 1.0).unwrap();
        let oracle = group_inverse_oracle(&rate_matrix(&m, 1.0).unwrap(), &ss).unwrap();
        let scale = oracle.0.amax().max(1.0);
        prop_assert!((&closed.0 - &oracle.0).amax() <= 1e-8 * scale);
    }

    #[test]
    fn gradient_routes_agree_with_finite_differences((rates, mu) in rates_strategy(25), p in 0.2f64..1.8) {
        let m = table_model(rates, mu);
        let g = policy_gradient(&m, p).unwrap();
        let h = 1e-5;
        let up = steady_state(&m, p + h).unwrap().throughput;
        let down = steady_state(&m, p - h).unwrap().throughput;
        let fd = (up - down) / (2.0 * h);
        prop_assert!((g.value() - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
        prop_assert!(g.max_pairwise_gap <= 1e-9 * (1.0 + fd.abs()));
    }

    #[test]
    fn variance_ordering_holds(pi in prop::collection::vec(0.001f64..1.0, 2..40), mu in 0.1f64..10.0) {
        let total: f64 = pi.iter().sum();
        let pi: Vec<f64> = pi.iter().map(|q| q / total).collect();
        let v = variances_from_distribution(&pi, mu).unwrap();
        let tol = 1e-10 * v.sigma2_model_free.abs().max(1.0);
        prop_assert!(v.sigma2_wde <= v.sigma2_model_free + tol);
        prop_assert!((v.sigma2_idle - 2.0 * v.sigma2_wde).abs() <= tol);
        prop_assert_eq!(v.sigma2_wde, v.sigma2_ur);
    }

    #[test]
    fn rescaling_time_scales_gradient_and_variance((rates, mu) in rates_strategy(20), c in 0.2f64..5.0) {
        let m = table_model(rates, mu);
        let scaled = m.scaled(c).unwrap();
        let g = policy_gradient(&m, 1.0).unwrap().value();
        let gs = policy_gradient(&scaled, 1.0).unwrap().value();
        prop_assert!((gs - c * g).abs() <= 1e-9 * (1.0 + (c * g).abs()));
        let v = asymptotic_variance(&m, 1.0).unwrap();
        let vs = asymptotic_variance(&scaled, 1.0).unwrap();
        prop_assert!((vs.sigma2_wde - c * v.sigma2_wde).abs() <= 1e-9 * (1.0 + c * v.sigma2_wde));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulated_logs_are_valid_and_round_trip(design in design_strategy(), seed in any::<u64>()) {
        let log = sample_log(design, seed, 300.0);
        prop_assert!(log.validate().is_ok());
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let back = EventLog::read_csv(log.header.clone(), buf.as_slice()).unwrap();
        prop_assert_eq!(back, log);
    }

    #[test]
    fn summary_conserves_time_and_arrivals(design in design_strategy(), seed in any::<u64>()) {
        let log = sample_log(design, seed, 300.0);
        let s = summarize(&log).unwrap();
        let tk: f64 = s.t_k.iter().sum();
        prop_assert!((tk - 300.0).abs() < 1e-9);
        prop_assert!((s.t_plus + s.t_minus - 300.0).abs() < 1e-9);
        let arrivals = log.events.iter().filter(|e| matches!(e.kind, EventKind::Arrival { .. })).count() as u64;
        prop_assert_eq!(s.n_plus + s.n_minus, arrivals);
        prop_assert_eq!(s.n_k_plus.iter().sum::<u64>(), s.n_plus);
        prop_assert_eq!(s.n_k_minus.iter().sum::<u64>(), s.n_minus);
    }

    #[test]
    fn full_window_matches_unwindowed(zeta in 0.02f64..0.2, seed in any::<u64>(), user in any::<bool>()) {
        let design = if user {
            Design::UserLevel { p: 1.0, zeta }
        } else {
            Design::RegenerativeSwitchback { p: 1.0, zeta, regeneration_state: 0 }
        };
        let log = sample_log(design, seed, 500.0);
        let s = summarize(&log).unwrap();
        let (window, direct) = if user {
            (WindowKind::Ur, tau_ur(&s))
        } else {
            (WindowKind::Wde, tau_wde(&s))
        };
        let Ok(direct) = direct else { return Ok(()) };
        let windowed = windowed_estimate(&log, 500.0, window, None).unwrap();
        prop_assert!((windowed.value - direct.value).abs() <= 1e-12 * (1.0 + direct.value.abs()));
    }
}

#[test]
fn preset_invariants_over_price_grid() {
    for name in SCENARIO_NAMES {
        let m = ScenarioSpec::new(name).build().unwrap();
        for p in m.price_range().interior_grid(9) {
            let ss = steady_state(&m, p).unwrap();
            assert!((ss.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{name} at {p}");
            let g = policy_gradient(&m, p).unwrap();
            assert!(g.max_pairwise_gap < 1e-9 * (1.0 + g.value().abs()), "{name} at {p}");
            let v = asymptotic_variance(&m, p).unwrap();
            assert!(v.sigma2_wde <= v.sigma2_model_free * (1.0 + 1e-12), "{name} at {p}");
        }
    }
}
