use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{reference_variances, truth, ExperimentConfig};
use super::{build_pool, HarnessError};
use crate::estimate::{estimate_all, EstimateOptions, EstimatorKind, Randomization};
use crate::gradient::AsymptoticVariances;
use crate::numeric::compensated_sum;
use crate::sim::{simulate, SimOptions};

/// One estimator on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub estimator: String,
    pub estimate: Option<f64>,
    pub sigma2_hat: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub covered: Option<bool>,
    pub error: Option<String>,
}

/// Summary over replicates for one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub estimator: String,
    pub n: usize,
    pub errors: usize,
    pub mean: Option<f64>,
    pub bias: Option<f64>,
    pub variance: Option<f64>,
    pub mc_se: Option<f64>,
    /// `T zeta^2` times the sample variance.
    pub scaled_variance: Option<f64>,
    /// `T zeta^2` times the mean squared error against `truth`.
    pub scaled_mse: Option<f64>,
    pub coverage: Option<f64>,
    pub truth: f64,
    /// Analytic asymptotic variance, when one applies.
    pub sigma2_true: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McMeta {
    pub config: ExperimentConfig,
    pub zeta: f64,
    pub truth: f64,
    pub reference_variances: Option<AsymptoticVariances>,
    pub estimators: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McResult {
    pub rows: Vec<ReplicateRow>,
    pub aggregates: Vec<AggregateRow>,
    pub meta: McMeta,
}

impl McResult {
    pub fn aggregate(&self, estimator: &str) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.estimator == estimator)
    }

    /// Successful estimates of one estimator, in replicate order.
    pub fn values(&self, estimator: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.estimator == estimator).filter_map(|r| r.estimate).collect()
    }
}

/// Runs `config.replications` independent replicates. Replicate `r` draws
/// from stream `r` of the master seed, so results do not depend on the
/// number of workers.
pub fn run_mc(config: &ExperimentConfig, threads: Option<usize>) -> Result<McResult, HarnessError> {
    config.validate()?;
    let design = config.resolved_design()?;
    let env = config.build_environment()?;
    design.validate(env.price_range(), env.capacity())?;
    let p = design.price();
    let zeta = config.zeta_value();
    let target = truth(&env, p, config.horizon)?;
    let reference = reference_variances(&env, p)?;
    let kinds =
        EstimatorKind::applicable(Randomization::of(&design), &config.kernel_lengths, config.truncation_c, env.mu());
    let names: Vec<String> = kinds.iter().map(|k| k.to_string()).collect();
    let opts = EstimateOptions {
        alpha: config.alpha,
        kernel_lengths: config.kernel_lengths.clone(),
        truncation: config.truncation_c,
    };
    let sim_opts = SimOptions { initial_state: config.initial_state, burn_in: config.burn_in };

    let pool = build_pool(threads)?;
    let per_rep: Vec<Vec<ReplicateRow>> = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|r| {
                let rows = simulate(&env, &design, config.horizon, config.master_seed, r as u64, sim_opts)
                    .map_err(|e| e.to_string())
                    .and_then(|log| estimate_all(&log, &opts).map_err(|e| e.to_string()));
                match rows {
                    Ok(rows) => rows
                        .into_iter()
                        .map(|row| match row.result {
                            Ok(e) => ReplicateRow {
                                replicate: r,
                                estimator: row.kind.to_string(),
                                estimate: Some(e.value),
                                sigma2_hat: e.sigma2_hat,
                                ci_low: e.ci_low,
                                ci_high: e.ci_high,
                                covered: e.ci_low.zip(e.ci_high).map(|(lo, hi)| lo <= target && target <= hi),
                                error: None,
                            },
                            Err(err) => failed(r, row.kind.to_string(), err.to_string()),
                        })
                        .collect(),
                    Err(msg) => names.iter().map(|n| failed(r, n.clone(), msg.clone())).collect(),
                }
            })
            .collect()
    });
    let rows: Vec<ReplicateRow> = per_rep.into_iter().flatten().collect();

    let scale2 = config.horizon * zeta * zeta;
    let sigma2 = |k: &EstimatorKind| reference.as_ref().and_then(|v| k.variance(v));
    let aggregates = kinds.iter().map(|k| aggregate(&rows, &k.to_string(), target, scale2, sigma2(k))).collect();
    let meta = McMeta {
        config: config.clone(),
        zeta,
        truth: target,
        reference_variances: reference,
        estimators: names,
        notes: vec![
            format!("replicate r uses stream r of master seed {}", config.master_seed),
            "truth is the analytic V'(p); for traces, its time average over the horizon".into(),
            "windowed estimators cover only complete windows".into(),
            "confidence intervals use value +/- z sqrt(sigma2_hat / (T zeta^2))".into(),
        ],
    };
    Ok(McResult { rows, aggregates, meta })
}

fn failed(replicate: usize, estimator: String, error: String) -> ReplicateRow {
    ReplicateRow {
        replicate,
        estimator,
        estimate: None,
        sigma2_hat: None,
        ci_low: None,
        ci_high: None,
        covered: None,
        error: Some(error),
    }
}

/// Aggregates the rows of one estimator. `scale2` is `T zeta^2`.
pub fn aggregate(
    rows: &[ReplicateRow],
    estimator: &str,
    truth: f64,
    scale2: f64,
    sigma2_true: Option<f64>,
) -> AggregateRow {
    let mine: Vec<&ReplicateRow> = rows.iter().filter(|r| r.estimator == estimator).collect();
    let values: Vec<f64> = mine.iter().filter_map(|r| r.estimate).collect();
    let n = values.len();
    let errors = mine.len() - n;
    let (mut mean, mut bias, mut variance, mut mc_se, mut scaled_variance, mut scaled_mse) =
        (None, None, None, None, None, None);
    if n > 0 {
        let m = compensated_sum(values.iter().copied()) / n as f64;
        let mse = compensated_sum(values.iter().map(|x| (x - truth) * (x - truth))) / n as f64;
        mean = Some(m);
        bias = Some(m - truth);
        scaled_mse = Some(scale2 * mse);
        if n > 1 {
            let v = compensated_sum(values.iter().map(|x| (x - m) * (x - m))) / (n - 1) as f64;
            variance = Some(v);
            mc_se = Some((v / n as f64).sqrt());
            scaled_variance = Some(scale2 * v);
        }
    }
    let flags: Vec<bool> = mine.iter().filter_map(|r| r.covered).collect();
    let coverage =
        if flags.is_empty() { None } else { Some(flags.iter().filter(|c| **c).count() as f64 / flags.len() as f64) };
    AggregateRow {
        estimator: estimator.to_string(),
        n,
        errors,
        mean,
        bias,
        variance,
        mc_se,
        scaled_variance,
        scaled_mse,
        coverage,
        truth,
        sigma2_true,
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const REPLICATE_HEADER: [&str; 8] =
    ["replicate", "estimator", "estimate", "sigma2_hat", "ci_low", "ci_high", "covered", "error"];

pub const AGGREGATE_HEADER: [&str; 12] = [
    "estimator",
    "n",
    "errors",
    "mean",
    "bias",
    "variance",
    "mc_se",
    "scaled_variance",
    "scaled_mse",
    "coverage",
    "truth",
    "sigma2_true",
];

pub fn write_replicates<W: Write>(rows: &[ReplicateRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPLICATE_HEADER)?;
    for r in rows {
        w.write_record([
            r.replicate.to_string(),
            r.estimator.clone(),
            opt(r.estimate),
            opt(r.sigma2_hat),
            opt(r.ci_low),
            opt(r.ci_high),
            opt(r.covered.map(u8::from)),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(())
}

pub fn write_aggregates<W: Write>(rows: &[AggregateRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER)?;
    for a in rows {
        w.write_record([
            a.estimator.clone(),
            a.n.to_string(),
            a.errors.to_string(),
            opt(a.mean),
            opt(a.bias),
            opt(a.variance),
            opt(a.mc_se),
            opt(a.scaled_variance),
            opt(a.scaled_mse),
            opt(a.coverage),
            a.truth.to_string(),
            opt(a.sigma2_true),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(())
}

/// Parses a file written by [`write_replicates`].
pub fn read_replicates<R: Read>(input: R) -> Result<Vec<ReplicateRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    let num = |s: &str| -> Result<Option<f64>, HarnessError> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| HarnessError::Io(format!("bad number `{s}`")))
        }
    };
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        rows.push(ReplicateRow {
            replicate: field(0).parse().map_err(|_| HarnessError::Io(format!("bad replicate `{}`", field(0))))?,
            estimator: field(1).to_string(),
            estimate: num(field(2))?,
            sigma2_hat: num(field(3))?,
            ci_low: num(field(4))?,
            ci_high: num(field(5))?,
            covered: match field(6) {
                "" => None,
                "1" => Some(true),
                "0" => Some(false),
                other => return Err(HarnessError::Io(format!("bad covered flag `{other}`"))),
            },
            error: Some(field(7).to_string()).filter(|s| !s.is_empty()),
        });
    }
    Ok(rows)
}

/// `run.csv` -> (`run.aggregate.csv`, `run.meta.json`).
pub fn companion_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("aggregate.csv"), path.with_extension("meta.json"))
}

/// Writes the replicate CSV at `path` plus its aggregate CSV and metadata.
pub fn write_mc_outputs(result: &McResult, path: &Path) -> Result<(), HarnessError> {
    let create =
        |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| HarnessError::Io(format!("{}: {e}", p.display())));
    let (agg, meta) = companion_paths(path);
    write_replicates(&result.rows, create(path)?)?;
    write_aggregates(&result.aggregates, create(&agg)?)?;
    let mut w = create(&meta)?;
    serde_json::to_writer_pretty(&mut w, &result.meta).map_err(|e| HarnessError::Io(e.to_string()))?;
    w.write_all(b"\n").map_err(|e| HarnessError::Io(e.to_string()))?;
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{DesignSpec, EnvironmentSpec, ZetaSpec};

    fn small_config(design: DesignSpec) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(EnvironmentSpec::scenario("mm1"), design, 200.0);
        c.zeta = ZetaSpec::Fixed(0.1);
        c.replications = 8;
        c.master_seed = 42;
        c
    }

    #[test]
    fn fixed_price_reports_empty_arm() {
        let mut c = small_config(DesignSpec::FixedPrice { p: 1.0 });
        c.replications = 1;
        let res = run_mc(&c, Some(1)).unwrap();
        assert_eq!(res.rows.len(), 3);
        for r in &res.rows {
            assert!(r.estimate.is_none());
            assert!(r.error.as_deref().unwrap().contains("arm"), "{:?}", r.error);
        }
    }

    #[test]
    fn aggregates_recompute_from_rows() {
        let c = small_config(DesignSpec::RegenerativeSwitchback { p: 1.0, regeneration_state: 0 });
        let res = run_mc(&c, Some(2)).unwrap();
        let mut buf = Vec::new();
        write_replicates(&res.rows, &mut buf).unwrap();
        let back = read_replicates(&buf[..]).unwrap();
        assert_eq!(back, res.rows);
        for a in &res.aggregates {
            let again = aggregate(&back, &a.estimator, a.truth, 200.0 * 0.01, a.sigma2_true);
            assert_eq!(&again, a);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut c = small_config(DesignSpec::UserLevel { p: 1.0 });
        c.kernel_lengths = vec![50.0];
        let a = run_mc(&c, Some(1)).unwrap();
        let b = run_mc(&c, Some(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.meta.estimators, vec!["ur", "ur@50", "ur_trunc@50"]);
    }

    #[test]
    fn outputs_land_next_to_each_other() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mc.csv");
        let res = run_mc(&small_config(DesignSpec::UserLevel { p: 1.0 }), Some(1)).unwrap();
        write_mc_outputs(&res, &path).unwrap();
        assert!(dir.path().join("mc.aggregate.csv").exists());
        assert!(dir.path().join("mc.meta.json").exists());
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("replicate,estimator,estimate,sigma2_hat,ci_low,ci_high,covered,error\n0,ur,"));
    }
}
