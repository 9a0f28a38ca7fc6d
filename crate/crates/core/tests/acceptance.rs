//! Acceptance suite. Runs every criterion, prints one line per criterion and
//! exits non-zero if any fails.

use std::time::Instant;

use congestion_lab::estimate::{windowed_estimate, WindowKind};
use congestion_lab::gradient::{asymptotic_variance, policy_gradient, variance_gap_identity};
use congestion_lab::harness::{
    run_mc, write_mc_outputs, DesignSpec, EnvironmentSpec, ExperimentConfig, McResult, ZetaSpec,
};
use congestion_lab::model::{
    group_inverse_closed_form, group_inverse_oracle, rate_matrix, scenario_preset, steady_state, PriceFamily,
    RateModel, ScenarioParams, ScenarioSpec, SCENARIO_NAMES,
};
use congestion_lab::rng::derive_stream;
use congestion_lab::sim::{simulate, Assignment, Design, EventKind, SimOptions, Trace};
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn preset(name: &str) -> RateModel {
    scenario_preset(name, &ScenarioParams::new()).unwrap()
}

fn representation_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst_analytic: f64 = 0.0;
    let mut worst_numeric: f64 = 0.0;
    for name in SCENARIO_NAMES {
        let m = preset(name);
        worst_analytic = worst_analytic.max(policy_gradient(&m, 1.0).unwrap().max_pairwise_gap);
        worst_numeric = worst_numeric.max(policy_gradient(&m.without_derivatives(), 1.0).unwrap().max_pairwise_gap);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_analytic < 1e-9 && worst_numeric < 1e-5 && secs < 1.0,
        format!("max gap analytic {worst_analytic:.2e}, numeric {worst_numeric:.2e}, {secs:.3}s"),
    )
}

fn group_inverse_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = derive_stream(2024, 0);
    let (mut worst_oracle, mut worst_qq, mut worst_pi): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..100 {
        let k = 1 + i % 30;
        let mu = rng.random_range(0.5..2.0);
        let table: Vec<f64> = (0..k).map(|_| mu * rng.random_range(0.5..1.5)).collect();
        let m = RateModel::from_table(format!("random{i}"), mu, table, PriceFamily::Linear).unwrap();
        let closed = group_inverse_closed_form(&m, 1.0).unwrap().0;
        let q = rate_matrix(&m, 1.0).unwrap();
        let ss = steady_state(&m, 1.0).unwrap();
        let oracle = group_inverse_oracle(&q, &ss).unwrap().0;
        worst_oracle = worst_oracle.max((&closed - &oracle).abs().max());
        let n = k + 1;
        let pi = DMatrix::from_row_slice(1, n, &ss.pi);
        let projector = DMatrix::identity(n, n) - DMatrix::from_element(n, 1, 1.0) * &pi;
        worst_qq = worst_qq.max((&q.0 * &closed - projector).abs().max());
        worst_pi = worst_pi.max((&pi * &closed).abs().max());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_oracle < 1e-9 && worst_qq < 1e-9 && worst_pi < 1e-9 && secs < 5.0,
        format!(
            "100 tables, K 1..30: |closed - oracle| {worst_oracle:.2e}, |QQ# - (I - 1pi)| {worst_qq:.2e}, |pi Q#| {worst_pi:.2e}, {secs:.3}s"
        ),
    )
}

fn variance_identities() -> Outcome {
    let mut worst_half: f64 = 0.0;
    let mut worst_order: f64 = f64::INFINITY;
    let mut worst_identity: f64 = 0.0;
    let mut check = |m: &RateModel, p: f64| {
        let ss = steady_state(m, p).unwrap();
        let v = asymptotic_variance(m, p).unwrap();
        worst_half = worst_half.max((v.sigma2_wde - v.sigma2_idle / 2.0).abs());
        worst_order = worst_order.min(v.sigma2_model_free + 1e-12 - v.sigma2_wde);
        worst_identity = worst_identity.max(((v.sigma2_model_free - v.sigma2_wde) - variance_gap_identity(&ss)).abs());
    };
    let grid: Vec<f64> = (1..20).map(|i| i as f64 * 0.1).collect();
    for name in SCENARIO_NAMES {
        let m = preset(name);
        for &p in &grid {
            check(&m, p);
        }
    }
    let mut rng = derive_stream(5, 0);
    for i in 0..500 {
        let k = 1 + i % 20;
        let mu = rng.random_range(0.2..3.0);
        let table: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..3.0)).collect();
        check(&RateModel::from_table("fuzz", mu, table, PriceFamily::Constant).unwrap(), 1.0);
    }
    let zm = ScenarioSpec::new("zero_modified").with("lambda0", 1.0).build().unwrap();
    let v = asymptotic_variance(&zm, 1.0).unwrap();
    let zm_gap = v.sigma2_model_free - v.sigma2_wde;
    let v = asymptotic_variance(&preset("mm1"), 1.0).unwrap();
    let mm1_gap = v.sigma2_model_free - v.sigma2_wde;
    outcome(
        worst_half < 1e-12 && worst_order >= 0.0 && worst_identity < 1e-10 && zm_gap > 1e-3 && mm1_gap.abs() < 1e-6,
        format!(
            "|wde - idle/2| {worst_half:.1e}, min slack {worst_order:.1e}, identity err {worst_identity:.1e}, zero_modified gap {zm_gap:.4}, mm1 gap {mm1_gap:.1e}"
        ),
    )
}

fn mm1_config(design: DesignSpec, replications: usize, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(EnvironmentSpec::scenario("mm1"), design, 20_000.0);
    c.zeta = ZetaSpec::Fixed(0.051);
    c.replications = replications;
    c.master_seed = seed;
    c
}

fn clt_runs() -> Vec<(&'static str, McResult)> {
    vec![
        (
            "regenerative",
            run_mc(&mm1_config(DesignSpec::RegenerativeSwitchback { p: 1.0, regeneration_state: 0 }, 500, 41), None)
                .unwrap(),
        ),
        ("user_level", run_mc(&mm1_config(DesignSpec::UserLevel { p: 1.0 }, 500, 42), None).unwrap()),
    ]
}

fn clt_variance(runs: &[(&str, McResult)], secs: f64) -> Outcome {
    let mut pass = secs < 120.0;
    let mut parts = Vec::new();
    for (design, res) in runs {
        for a in &res.aggregates {
            let sigma2 = a.sigma2_true.unwrap();
            let ratio = a.scaled_variance.unwrap() / sigma2;
            let z = a.bias.unwrap() / a.mc_se.unwrap();
            pass &= (0.75..=1.25).contains(&ratio) && z.abs() <= 3.0 && a.errors == 0;
            parts.push(format!("{design}/{} var ratio {ratio:.3} bias z {z:+.2}", a.estimator));
        }
    }
    parts.push(format!("{secs:.1}s"));
    outcome(pass, parts.join("; "))
}

fn ci_coverage(runs: &[(&str, McResult)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (design, res) in runs {
        for a in &res.aggregates {
            let c = a.coverage.unwrap();
            pass &= (0.91..=0.98).contains(&c);
            parts.push(format!("{design}/{} {:.1}%", a.estimator, 100.0 * c));
        }
    }
    outcome(pass, parts.join("; "))
}

fn occupancy_law() -> Outcome {
    let horizon = 1e5;
    let results: Vec<(String, f64)> = SCENARIO_NAMES
        .par_iter()
        .enumerate()
        .map(|(i, name)| {
            let m = preset(name);
            let pi = steady_state(&m, 1.0).unwrap().pi;
            let log = simulate(&m.into(), &Design::FixedPrice { p: 1.0 }, horizon, 6, i as u64, SimOptions::default())
                .unwrap();
            let mut occ = vec![0.0; pi.len()];
            let (mut s, mut t) = (0usize, 0.0);
            for e in &log.events {
                occ[s] += e.t - t;
                t = e.t;
                match e.kind {
                    EventKind::Arrival { .. } => s += 1,
                    EventKind::Departure { .. } => s -= 1,
                    EventKind::PriceSwitch { .. } => {}
                }
            }
            occ[s] += horizon - t;
            let worst = occ.iter().zip(&pi).map(|(o, p)| (o / horizon - p).abs()).fold(0.0, f64::max);
            (name.to_string(), worst)
        })
        .collect();
    let pass = results.iter().all(|(_, w)| *w < 0.01);
    let detail = results.iter().map(|(n, w)| format!("{n} {w:.4}")).collect::<Vec<_>>().join(", ");
    outcome(pass, format!("max |T_k/T - pi_k|: {detail}"))
}

fn mse_ordering() -> Outcome {
    let scenarios = [
        ScenarioSpec::new("mm1").with("lambda", 0.5),
        ScenarioSpec::new("zero_modified").with("lambda0", 1.0),
        ScenarioSpec::new("power_law").with("alpha", 0.4),
        ScenarioSpec::new("conformity").with("lambda", 2.0),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, s) in scenarios.iter().enumerate() {
        let env = EnvironmentSpec::Scenario { name: s.name.clone(), params: s.params.clone() };
        let run = |design: DesignSpec, seed: u64| {
            let mut c = ExperimentConfig::new(env.clone(), design, 2000.0);
            c.zeta = ZetaSpec::Fixed(0.05);
            c.replications = 2000;
            c.master_seed = seed;
            run_mc(&c, None).unwrap()
        };
        let sb = run(
            DesignSpec::IntervalSwitchback {
                p: 1.0,
                interval_length: None,
                num_intervals: Some(2),
                assignment: Assignment::BalancedPermutation,
            },
            700 + i as u64,
        );
        let ur = run(DesignSpec::UserLevel { p: 1.0 }, 800 + i as u64);
        let wde = sb.aggregate("wde").unwrap().scaled_mse.unwrap();
        let u = ur.aggregate("ur").unwrap().scaled_mse.unwrap();
        pass &= u <= 1.1 * wde;
        parts.push(format!("{} ur {u:.3} vs switchback wde {wde:.3}", s.name));
    }
    outcome(pass, format!("scaled MSE: {}", parts.join("; ")))
}

/// Two proportional-balking regimes with linear price response, switching
/// at `T/2`.
fn two_regime_trace() -> Trace {
    let a = ScenarioSpec::new("appendix_linear").with("a", 0.6).build().unwrap();
    let b = ScenarioSpec::new("appendix_linear").with("a", 1.2).build().unwrap();
    Trace::piecewise(vec![0.0, 0.5, 1.0], vec![a, b]).unwrap()
}

fn nonstationary_consistency() -> Outcome {
    let trace = two_regime_trace();
    let zeta = 0.1;
    let design = Design::UserLevel { p: 1.0, zeta };
    let c = 2.0;
    let mut medians = Vec::new();
    for (i, horizon) in [2e3, 2e4, 2e5].into_iter().enumerate() {
        let truth = trace.average_gradient(1.0, horizon).unwrap();
        let windows = (horizon.sqrt() / c).round();
        let s = horizon / windows;
        let env = trace.clone().into();
        let mut errors: Vec<f64> = (0..200u64)
            .into_par_iter()
            .map(|r| {
                let log = simulate(&env, &design, horizon, 900 + i as u64, r, SimOptions::default()).unwrap();
                let e = windowed_estimate(&log, s, WindowKind::Ur, Some(10.0 * 2.0)).unwrap();
                (e.value - truth).abs()
            })
            .collect();
        errors.sort_by(f64::total_cmp);
        medians.push((horizon, s, (errors[99] + errors[100]) / 2.0));
    }
    let pass = medians.windows(2).all(|w| w[1].2 < w[0].2);
    let detail =
        medians.iter().map(|(t, s, m)| format!("T={t:.0} s={s:.1} median |err| {m:.4}")).collect::<Vec<_>>().join("; ");
    outcome(pass, detail)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut c = mm1_config(DesignSpec::UserLevel { p: 1.0 }, 64, 99);
    c.horizon = 2000.0;
    c.kernel_lengths = vec![250.0];
    let mut outputs = Vec::new();
    for threads in [1usize, 4, 16] {
        let path = dir.path().join(format!("mc{threads}.csv"));
        write_mc_outputs(&run_mc(&c, Some(threads)).unwrap(), &path).unwrap();
        let read = |ext: &str| std::fs::read(path.with_extension(ext)).unwrap();
        outputs.push((read("csv"), read("aggregate.csv"), read("meta.json")));
    }
    let pass = outputs.windows(2).all(|w| w[0] == w[1]);
    outcome(pass, format!("{} replicate CSV bytes identical under 1, 4, 16 workers", outputs[0].0.len()))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!("criterion {n} [{name}]: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    report(1, "representation equivalence", representation_equivalence());
    report(2, "group inverse identity", group_inverse_identity());
    report(3, "variance comparison identities", variance_identities());
    let start = Instant::now();
    let runs = clt_runs();
    let secs = start.elapsed().as_secs_f64();
    report(4, "CLT variance reproduction", clt_variance(&runs, secs));
    report(5, "CI coverage", ci_coverage(&runs));
    report(6, "occupancy law", occupancy_law());
    report(7, "MSE ordering, user-level vs 2-interval switchback", mse_ordering());
    report(8, "non-stationary consistency", nonstationary_consistency());
    report(9, "determinism across worker counts", determinism());
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
