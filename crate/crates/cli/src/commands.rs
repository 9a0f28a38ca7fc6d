use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use congestion_lab::estimate::{estimate_all, EstimateError, EstimateOptions};
use congestion_lab::gradient::{asymptotic_variance, policy_gradient, write_panel_csv};
use congestion_lab::harness::{
    run_nonstationary_study, run_scenario_gallery, write_aggregates, write_mc_outputs, write_study_csv,
    NonstationaryConfig,
};
use congestion_lab::model::{steady_state, ModelError, ScenarioSpec};
use congestion_lab::sim::{build_ed_trace, read_grid_csv, synthetic_week, write_grid_csv, SimError};
use congestion_lab::{run_mc, simulate as run_simulation, EventLog, ExperimentConfig, HarnessError, SimOptions};
use serde_json::{json, Value};

use crate::TraceKind;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        if e.is_config_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn data<E: fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn sink(output: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match output {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_param(raw: &str) -> Result<(String, Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("parameter `{raw}` is not of the form key=value")))?;
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.trim().to_string(), value))
}

pub fn analytic(scenario: &str, p: f64, params: &[String]) -> Result<(), CliError> {
    let mut spec = ScenarioSpec::new(scenario);
    for raw in params {
        let (k, v) = parse_param(raw)?;
        spec = spec.with(&k, v);
    }
    let model = spec.build()?;
    let ss = steady_state(&model, p)?;
    let gradient = policy_gradient(&model, p)?;
    let variances = asymptotic_variance(&model, p)?;
    let report = json!({
        "scenario": scenario,
        "model_id": model.id(),
        "p": p,
        "mu": ss.mu,
        "capacity": ss.capacity(),
        "throughput": ss.throughput,
        "idle_probability": ss.idle_probability(),
        "gradient": gradient,
        "variances": variances,
        "pi": ss.pi,
    });
    let mut out = sink(None)?;
    serde_json::to_writer_pretty(&mut out, &report).map_err(data)?;
    writeln!(out).map_err(data)?;
    out.flush().map_err(data)
}

pub fn simulate(config: &Path, replicate: u64, output: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(config)?;
    let path = output
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| CliError::Config("no output path: pass --output or set `output` in the config".into()))?;
    let design = cfg.resolved_design()?;
    let env = cfg.build_environment()?;
    let opts = SimOptions { initial_state: cfg.initial_state, burn_in: cfg.burn_in };
    let log =
        run_simulation(&env, &design, cfg.horizon, cfg.master_seed, replicate, opts).map_err(HarnessError::from)?;
    log.save(&path).map_err(data)?;
    eprintln!("{} events over [0, {}] -> {}", log.events.len(), cfg.horizon, path.display());
    Ok(())
}

pub fn estimate(
    log: &Path,
    kernels: Vec<f64>,
    truncation: Option<f64>,
    alpha: f64,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    if let Some(s) = kernels.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(CliError::Config(format!("kernel lengths must be positive, got {s}")));
    }
    if let Some(c) = truncation.filter(|c| !(*c > 0.0)) {
        return Err(CliError::Config(format!("truncation constant must be positive, got {c}")));
    }
    let log = EventLog::load(log).map_err(|e| CliError::Data(format!("{}: {e}", log.display())))?;
    let opts = EstimateOptions { alpha, kernel_lengths: kernels, truncation };
    let rows = estimate_all(&log, &opts).map_err(|e| match e {
        EstimateError::InvalidAlpha(_) => CliError::Config(e.to_string()),
        e => data(e),
    })?;
    let fmt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(sink(output.as_deref())?);
    w.write_record(["estimator", "value", "sigma2_hat", "ci_low", "ci_high", "skipped_states"]).map_err(data)?;
    for row in rows {
        match row.result {
            Ok(e) => {
                let skipped: Vec<String> = e.skipped_states.iter().map(|k| k.to_string()).collect();
                w.write_record([
                    e.estimator,
                    e.value.to_string(),
                    fmt(e.sigma2_hat),
                    fmt(e.ci_low),
                    fmt(e.ci_high),
                    skipped.join(";"),
                ])
                .map_err(data)?;
            }
            Err(err) => eprintln!("{}: {err}", row.kind),
        }
    }
    w.flush().map_err(data)
}

pub fn mc(config: &Path, threads: Option<usize>, output: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if output.is_some() {
        cfg.output = output;
    }
    let result = run_mc(&cfg, threads)?;
    let failures = result.rows.iter().filter(|r| r.error.is_some()).count();
    if failures > 0 {
        eprintln!("{failures} of {} estimates failed; see the error column", result.rows.len());
    }
    match &cfg.output {
        Some(path) => write_mc_outputs(&result, path)?,
        None => write_aggregates(&result.aggregates, sink(None)?)?,
    }
    Ok(())
}

fn trace_error(e: SimError) -> CliError {
    match e {
        SimError::InvalidTrace(_) | SimError::Model(_) => CliError::Config(e.to_string()),
        e => data(e),
    }
}

pub fn trace(
    kind: TraceKind,
    weeks: usize,
    p: f64,
    grid: Option<PathBuf>,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    let grid = match grid {
        Some(path) => {
            let f = File::open(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            Some(read_grid_csv(BufReader::new(f)).map_err(data)?)
        }
        None => None,
    };
    match kind {
        TraceKind::Grid => {
            let cells = grid.unwrap_or_else(synthetic_week);
            write_grid_csv(&cells, sink(output.as_deref())?).map_err(data)
        }
        TraceKind::Ed => {
            let trace = build_ed_trace(weeks, p, grid.as_deref()).map_err(trace_error)?;
            let horizon = weeks as f64 * 7.0 * 24.0;
            let mut cache: BTreeMap<u64, f64> = BTreeMap::new();
            let mut w = csv::Writer::from_writer(sink(output.as_deref())?);
            w.write_record(["start", "end", "multiplier", "gradient"]).map_err(data)?;
            for piece in trace.pieces(horizon) {
                let g = match cache.get(&piece.multiplier.to_bits()) {
                    Some(g) => *g,
                    None => {
                        let m = trace.regimes()[piece.regime].scaled_arrivals(piece.multiplier)?;
                        let g = policy_gradient(&m, p)?.value();
                        cache.insert(piece.multiplier.to_bits(), g);
                        g
                    }
                };
                w.write_record([
                    piece.start.to_string(),
                    piece.end.to_string(),
                    piece.multiplier.to_string(),
                    g.to_string(),
                ])
                .map_err(data)?;
            }
            w.flush().map_err(data)
        }
    }
}

pub fn gallery(output: Option<PathBuf>) -> Result<(), CliError> {
    let rows = run_scenario_gallery()?;
    write_panel_csv(&rows, sink(output.as_deref())?).map_err(data)
}

pub fn nonstationary(config: Option<PathBuf>, threads: Option<usize>, output: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = match config {
        Some(path) => {
            let f = File::open(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_reader::<_, NonstationaryConfig>(BufReader::new(f))
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => NonstationaryConfig::default(),
    };
    if cfg.replications == 0 {
        return Err(CliError::Config("replications must be at least 1".into()));
    }
    let rows = run_nonstationary_study(&cfg, threads)?;
    write_study_csv(&rows, sink(output.as_deref())?)?;
    Ok(())
}
