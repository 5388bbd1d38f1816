//! Experiment runner: pipelines, JSON reports, parameter sweeps and stored
//! allocations.
//!
//! Reports carry no timestamps, so the same spec and seed always produce the
//! same bytes. Floats in reports and CSV tables are rounded to 12 significant
//! digits.
//!
//! Allocation files are line oriented, `#` starts a comment:
//!
//! ```text
//! fractional <count>        integral <count>
//! x <u> <v> <value>         e <u> <v>
//! ```

use std::fmt;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::boost::{boost, default_max_iterations, default_solver, BoostTraceRow};
use crate::error::{Error, Result};
use crate::generate::{generate, GenSpec};
use crate::graph::{
    validate_fractional, validate_integral, AllocationInstance, FractionalAllocation, IntegralAllocation,
};
use crate::local::{default_tau, finalize, run_until_terminated, EngineConfig, LocalEngine, RoundStats};
use crate::mpc::{run_mpc_with_config, run_mpc_with_guessing, MpcConfig};
use crate::oracle::opt_flow;
use crate::rng::SimRng;
use crate::rounding::{default_copies, round_best_of_report};

/// Environment variable capping the sweep worker pool.
pub const THREADS_ENV: &str = "SPARSE_ALLOC_THREADS";
/// Instances with more edges skip the oracle.
pub const ORACLE_EDGE_LIMIT: usize = 2_000_000;

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// 12-significant-digit decimal text.
pub fn fmt_float(x: f64) -> String {
    format!("{}", round12(x))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Local,
    LocalAutoterm,
    Mpc,
    MpcGuess,
    Round,
    Boost,
    Oracle,
}

impl Pipeline {
    pub const ALL: [Pipeline; 7] = [
        Pipeline::Local,
        Pipeline::LocalAutoterm,
        Pipeline::Mpc,
        Pipeline::MpcGuess,
        Pipeline::Round,
        Pipeline::Boost,
        Pipeline::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Local => "local",
            Pipeline::LocalAutoterm => "local_autoterm",
            Pipeline::Mpc => "mpc",
            Pipeline::MpcGuess => "mpc_guess",
            Pipeline::Round => "round",
            Pipeline::Boost => "boost",
            Pipeline::Oracle => "oracle",
        }
    }

    pub fn default_epsilon(self) -> f64 {
        match self {
            Pipeline::Boost => 0.25,
            _ => 0.1,
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown pipeline `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InstanceSource {
    File(PathBuf),
    Gen(GenSpec),
}

impl InstanceSource {
    pub fn load(&self) -> Result<AllocationInstance> {
        match self {
            InstanceSource::File(path) => {
                let file = std::fs::File::open(path)?;
                AllocationInstance::read_text(std::io::BufReader::new(file))
            }
            InstanceSource::Gen(spec) => Ok(generate(spec)?.instance),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            InstanceSource::File(path) => path.display().to_string(),
            InstanceSource::Gen(spec) => spec.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub source: InstanceSource,
    pub pipeline: Pipeline,
    /// Defaults to [`Pipeline::default_epsilon`].
    pub epsilon: Option<f64>,
    pub alpha: f64,
    pub tau: Option<u32>,
    pub copies: Option<usize>,
    pub seed: u64,
    pub max_iterations: Option<usize>,
}

impl ExperimentSpec {
    pub fn new(source: InstanceSource, pipeline: Pipeline) -> Self {
        Self {
            source,
            pipeline,
            epsilon: None,
            alpha: 0.5,
            tau: None,
            copies: None,
            seed: 0,
            max_iterations: None,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or_else(|| self.pipeline.default_epsilon())
    }

    /// Applies one `key=value` override: `eps`, `alpha`, `tau`, `copies`,
    /// `seed`, `pipeline`, `max_iterations`, or any generator key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::InvalidConfig(format!("bad value `{value}` for `{key}`"));
        match key {
            "eps" | "epsilon" => self.epsilon = Some(value.parse().map_err(|_| bad())?),
            "alpha" => self.alpha = value.parse().map_err(|_| bad())?,
            "tau" => self.tau = Some(value.parse().map_err(|_| bad())?),
            "copies" => self.copies = Some(value.parse().map_err(|_| bad())?),
            "max_iterations" => self.max_iterations = Some(value.parse().map_err(|_| bad())?),
            "pipeline" => self.pipeline = value.parse()?,
            "seed" => {
                self.seed = value.parse().map_err(|_| bad())?;
                if let InstanceSource::Gen(spec) = &mut self.source {
                    spec.seed = self.seed;
                }
            }
            _ => match &mut self.source {
                InstanceSource::Gen(spec) => {
                    *spec = format!("{spec},{key}={value}").parse()?;
                }
                InstanceSource::File(_) => {
                    return Err(Error::InvalidConfig(format!(
                        "`{key}` only applies to generated instances"
                    )))
                }
            },
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub pipeline: Pipeline,
    pub instance: String,
    pub left_count: usize,
    pub right_count: usize,
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub tau: Option<u32>,
    pub rounds_used: Option<u32>,
    pub budget_exhausted: Option<bool>,
    pub weight: f64,
    pub opt: Option<f64>,
    /// `opt / weight`.
    pub ratio: Option<f64>,
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_used: Option<u64>,
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    pub b: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phases: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mpc_rounds: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_ball_volume: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guess_exhausted: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fractional_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub copies: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampled_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropped_heavy_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

impl ExperimentReport {
    fn blank(spec: &ExperimentSpec, instance: &AllocationInstance) -> Self {
        Self {
            pipeline: spec.pipeline,
            instance: spec.source.describe(),
            left_count: instance.left_count(),
            right_count: instance.right_count(),
            n: instance.vertex_count(),
            m: instance.edge_count(),
            epsilon: round12(spec.epsilon()),
            seed: spec.seed,
            tau: None,
            rounds_used: None,
            budget_exhausted: None,
            weight: 0.0,
            opt: None,
            ratio: None,
            feasible: true,
            lambda_used: None,
            b: None,
            t: None,
            phases: None,
            mpc_rounds: None,
            max_ball_volume: None,
            guess_exhausted: None,
            fractional_weight: None,
            copies: None,
            sampled_count: None,
            dropped_heavy_count: None,
            initial_size: None,
            iterations: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// What a pipeline produced.
#[derive(Clone, Debug, PartialEq)]
pub enum AllocationOutput {
    Fractional(FractionalAllocation),
    Integral(IntegralAllocation),
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub instance: AllocationInstance,
    pub allocation: AllocationOutput,
    pub round_trace: Vec<RoundStats>,
    pub boost_trace: Vec<BoostTraceRow>,
}

fn ratio(opt: Option<f64>, weight: f64) -> Option<f64> {
    match opt {
        Some(o) if weight > 0.0 => Some(round12(o / weight)),
        _ => None,
    }
}

/// Loads the instance, runs the pipeline and audits the output.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let instance = spec.source.load()?;
    run_on_instance(spec, instance)
}

pub fn run_on_instance(spec: &ExperimentSpec, instance: AllocationInstance) -> Result<ExperimentOutcome> {
    let eps = spec.epsilon();
    let mut report = ExperimentReport::blank(spec, &instance);
    let mut round_trace = Vec::new();
    let mut boost_trace = Vec::new();
    let lambda = instance.arboricity_bound();
    let opt = (instance.edge_count() <= ORACLE_EDGE_LIMIT).then(|| opt_flow(&instance));
    let allocation = match spec.pipeline {
        Pipeline::Local => {
            let tau = spec.tau.unwrap_or_else(|| default_tau(eps, lambda));
            let mut engine = LocalEngine::new(&instance, EngineConfig::uniform(eps, tau))?;
            round_trace = engine.run();
            let state = engine.into_state();
            report.tau = Some(tau);
            report.rounds_used = Some(state.round);
            AllocationOutput::Fractional(finalize(&instance, &state))
        }
        Pipeline::LocalAutoterm => {
            let budget = spec.tau.unwrap_or_else(|| default_tau(eps, lambda));
            let out = run_until_terminated(&instance, eps, budget)?;
            report.tau = Some(budget);
            report.rounds_used = Some(out.rounds_used);
            report.budget_exhausted = Some(out.budget_exhausted);
            round_trace = out.trace;
            AllocationOutput::Fractional(out.allocation)
        }
        Pipeline::Mpc => {
            let mut config = MpcConfig::new(instance.vertex_count(), eps, spec.alpha, lambda as u64, spec.seed)?;
            if let Some(tau) = spec.tau {
                config.tau = tau;
            }
            let run = run_mpc_with_config(&instance, &config)?;
            report.tau = Some(config.tau);
            report.rounds_used = Some(run.state.round);
            report.lambda_used = Some(config.lambda_guess);
            report.b = Some(config.b);
            report.t = Some(config.t);
            report.phases = Some(run.cost.phases);
            report.mpc_rounds = Some(run.cost.mpc_rounds);
            report.max_ball_volume = Some(run.cost.max_ball_volume);
            AllocationOutput::Fractional(run.allocation)
        }
        Pipeline::MpcGuess => {
            let out = run_mpc_with_guessing(&instance, eps, spec.alpha, spec.seed)?;
            report.tau = Some(out.config.tau);
            report.rounds_used = Some(out.state.round);
            report.lambda_used = Some(out.lambda_used);
            report.b = Some(out.config.b);
            report.t = Some(out.config.t);
            report.phases = Some(out.cost.phases);
            report.mpc_rounds = Some(out.cost.mpc_rounds);
            report.max_ball_volume = Some(out.cost.max_ball_volume);
            report.guess_exhausted = Some(out.guess_exhausted);
            AllocationOutput::Fractional(out.allocation)
        }
        Pipeline::Round => {
            let budget = spec.tau.unwrap_or_else(|| default_tau(eps, lambda));
            let frac = run_until_terminated(&instance, eps, budget)?;
            let copies = spec.copies.unwrap_or_else(|| default_copies(instance.vertex_count()));
            let rounded = round_best_of_report(&instance, &frac.allocation, copies, spec.seed);
            report.tau = Some(budget);
            report.rounds_used = Some(frac.rounds_used);
            report.fractional_weight = Some(round12(frac.allocation.weight()));
            report.copies = Some(copies);
            report.sampled_count = Some(rounded.sampled_count);
            report.dropped_heavy_count = Some(rounded.dropped_heavy_count);
            AllocationOutput::Integral(rounded.kept_edges)
        }
        Pipeline::Boost => {
            let budget = spec.max_iterations.unwrap_or_else(|| default_max_iterations(eps));
            let out = boost(&instance, eps, &default_solver, &mut SimRng::new(spec.seed), budget)?;
            report.initial_size = Some(out.initial_size);
            report.iterations = Some(out.iterations);
            boost_trace = out.trace;
            AllocationOutput::Integral(out.allocation)
        }
        Pipeline::Oracle => {
            let result = opt.clone().unwrap_or_else(|| opt_flow(&instance));
            AllocationOutput::Integral(result.witness)
        }
    };
    let (feasible, weight) = match &allocation {
        AllocationOutput::Fractional(f) => validate_fractional(&instance, f),
        AllocationOutput::Integral(m) => (validate_integral(&instance, m), m.len() as f64),
    };
    report.feasible = feasible;
    report.weight = round12(weight);
    report.opt = opt.map(|o| o.opt_size as f64);
    report.ratio = ratio(report.opt, weight);
    Ok(ExperimentOutcome {
        report,
        instance,
        allocation,
        round_trace,
        boost_trace,
    })
}

/// Cartesian product of the grid, first key varying slowest.
pub fn expand_grid(vary: &[(String, Vec<String>)]) -> Vec<Vec<(String, String)>> {
    let mut points: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in vary {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

/// Parses `key=v1,v2,...`.
pub fn parse_vary(arg: &str) -> Result<(String, Vec<String>)> {
    let (key, values) = arg
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("expected key=v1,v2,... got `{arg}`")))?;
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(Error::InvalidConfig(format!("no values for `{key}`")));
    }
    Ok((key.trim().to_string(), values))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub point: Vec<(String, String)>,
    pub report: ExperimentReport,
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs every grid point; rows come back in grid order.
pub fn sweep(template: &ExperimentSpec, vary: &[(String, Vec<String>)]) -> Result<Vec<SweepRow>> {
    let points = expand_grid(vary);
    let specs = points
        .iter()
        .map(|point| {
            let mut spec = template.clone();
            for (k, v) in point {
                spec.set(k, v)?;
            }
            Ok(spec)
        })
        .collect::<Result<Vec<_>>>()?;
    let run = || {
        specs
            .par_iter()
            .map(|s| run_experiment(s).map(|o| o.report))
            .collect::<Result<Vec<_>>>()
    };
    let reports = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    Ok(points
        .into_iter()
        .zip(reports)
        .map(|(point, report)| SweepRow { point, report })
        .collect())
}

fn opt_text<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV with the varied keys first, then the report columns. A report column
/// whose name is also a varied key is left out.
pub fn write_sweep_csv<W: Write>(writer: W, vary: &[(String, Vec<String>)], rows: &[SweepRow]) -> Result<()> {
    const COLUMNS: [&str; 11] = [
        "pipeline",
        "n",
        "m",
        "epsilon",
        "seed",
        "rounds_used",
        "weight",
        "opt",
        "ratio",
        "mpc_rounds",
        "feasible",
    ];
    let keep: Vec<bool> = COLUMNS.iter().map(|c| !vary.iter().any(|(k, _)| k == c)).collect();
    let mut out = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = vary.iter().map(|(k, _)| k.clone()).collect();
    header.extend(
        COLUMNS
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(c, _)| c.to_string()),
    );
    out.write_record(&header)?;
    for row in rows {
        let r = &row.report;
        let mut record: Vec<String> = row.point.iter().map(|(_, v)| v.clone()).collect();
        let fields = [
            r.pipeline.to_string(),
            r.n.to_string(),
            r.m.to_string(),
            fmt_float(r.epsilon),
            r.seed.to_string(),
            opt_text(r.rounds_used),
            fmt_float(r.weight),
            opt_text(r.opt.map(fmt_float)),
            opt_text(r.ratio.map(fmt_float)),
            opt_text(r.mpc_rounds),
            r.feasible.to_string(),
        ];
        record.extend(fields.into_iter().zip(&keep).filter(|(_, &k)| k).map(|(f, _)| f));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes an allocation in the text format; fractional files list nonzero entries.
pub fn write_allocation<W: Write>(mut w: W, instance: &AllocationInstance, alloc: &AllocationOutput) -> Result<()> {
    match alloc {
        AllocationOutput::Fractional(f) => {
            let entries: Vec<(usize, f64)> = f
                .values()
                .iter()
                .copied()
                .enumerate()
                .filter(|&(_, x)| x != 0.0)
                .collect();
            writeln!(w, "fractional {}", entries.len())?;
            for (e, x) in entries {
                let (u, v) = instance.edge(e);
                writeln!(w, "x {u} {v} {x:?}")?;
            }
        }
        AllocationOutput::Integral(m) => {
            writeln!(w, "integral {}", m.len())?;
            for &e in m.edges() {
                let (u, v) = instance.edge(e);
                writeln!(w, "e {u} {v}")?;
            }
        }
    }
    Ok(())
}

/// Reads an allocation file against `instance`; unknown edges are errors.
pub fn read_allocation<R: BufRead>(reader: R, instance: &AllocationInstance) -> Result<AllocationOutput> {
    let bad = |line: usize, msg: &str| Error::MalformedInstance(format!("allocation line {line}: {msg}"));
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim().to_string();
        if !content.is_empty() {
            lines.push((i + 1, content));
        }
    }
    let Some(((first_no, header), body)) = lines.split_first() else {
        return Err(Error::MalformedInstance("empty allocation file".into()));
    };
    let parts: Vec<&str> = header.split_whitespace().collect();
    let (kind, count) = match parts.as_slice() {
        [kind, count] => (*kind, count.parse::<usize>().map_err(|_| bad(*first_no, "bad count"))?),
        _ => return Err(bad(*first_no, "expected `fractional <count>` or `integral <count>`")),
    };
    if body.len() != count {
        return Err(Error::MalformedInstance(format!(
            "allocation declares {count} entries, found {}",
            body.len()
        )));
    }
    let edge_of = |no: usize, u: &str, v: &str| -> Result<usize> {
        let u: usize = u.parse().map_err(|_| bad(no, "bad vertex"))?;
        let v: usize = v.parse().map_err(|_| bad(no, "bad vertex"))?;
        if u >= instance.vertex_count() {
            return Err(bad(no, "vertex out of range"));
        }
        instance
            .neighbors(u)
            .binary_search_by_key(&v, |&(w, _)| w)
            .map(|i| instance.neighbors(u)[i].1)
            .map_err(|_| bad(no, "no such edge"))
    };
    match kind {
        "fractional" => {
            let mut values = vec![0.0; instance.edge_count()];
            for (no, line) in body {
                let p: Vec<&str> = line.split_whitespace().collect();
                let [tag, u, v, x] = p.as_slice() else {
                    return Err(bad(*no, "expected `x <u> <v> <value>`"));
                };
                if *tag != "x" {
                    return Err(bad(*no, "expected `x <u> <v> <value>`"));
                }
                let e = edge_of(*no, u, v)?;
                values[e] = x.parse().map_err(|_| bad(*no, "bad value"))?;
            }
            Ok(AllocationOutput::Fractional(FractionalAllocation::from_values(values)))
        }
        "integral" => {
            let mut edges = Vec::with_capacity(count);
            for (no, line) in body {
                let p: Vec<&str> = line.split_whitespace().collect();
                let [tag, u, v] = p.as_slice() else {
                    return Err(bad(*no, "expected `e <u> <v>`"));
                };
                if *tag != "e" {
                    return Err(bad(*no, "expected `e <u> <v>`"));
                }
                edges.push(edge_of(*no, u, v)?);
            }
            Ok(AllocationOutput::Integral(IntegralAllocation::new(edges)))
        }
        _ => Err(bad(*first_no, "unknown allocation kind")),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub kind: &'static str,
    pub feasible: bool,
    pub weight: f64,
    pub opt: f64,
    pub ratio: Option<f64>,
}

/// Feasibility and approximation audit of a stored allocation.
pub fn verify(instance: &AllocationInstance, alloc: &AllocationOutput) -> VerifyReport {
    let (kind, (feasible, weight)) = match alloc {
        AllocationOutput::Fractional(f) => ("fractional", validate_fractional(instance, f)),
        AllocationOutput::Integral(m) => ("integral", (validate_integral(instance, m), m.len() as f64)),
    };
    let opt = opt_flow(instance).opt_size as f64;
    VerifyReport {
        kind,
        feasible,
        weight: round12(weight),
        opt,
        ratio: ratio(Some(opt), weight),
    }
}
