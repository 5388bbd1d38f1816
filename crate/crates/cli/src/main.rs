//! `sparse-alloc`: generate instances, run allocation pipelines, sweep
//! parameters and audit stored allocations.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sparse_alloc::boost::write_boost_trace;
use sparse_alloc::experiment::{
    parse_vary, read_allocation, run_experiment, sweep, verify, write_allocation, write_sweep_csv, ExperimentOutcome,
    ExperimentSpec, InstanceSource, Pipeline,
};
use sparse_alloc::generate::{generate, GenSpec};
use sparse_alloc::local::write_trace;
use sparse_alloc::oracle::opt_flow;
use sparse_alloc::{AllocationInstance, Error, Result};

#[derive(Parser)]
#[command(
    name = "sparse-alloc",
    version,
    about = "Proportional allocation on sparse bipartite graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated instance in the text format.
    Generate {
        /// Generator spec, e.g. `forest_union:nl=100,nr=100,lambda=3,seed=7`.
        #[arg(long = "gen")]
        spec: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one pipeline and emit a JSON report.
    Run {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value = "local")]
        pipeline: String,
        /// JSON report path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-round (or per-iteration for boost) CSV trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Store the produced allocation for `verify`.
        #[arg(long)]
        save_allocation: Option<PathBuf>,
    },
    /// Run a pipeline over a parameter grid and emit a CSV table.
    Sweep {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value = "local")]
        pipeline: String,
        /// `key=v1,v2,...`; repeat for a multi-dimensional grid.
        #[arg(long, required = true)]
        vary: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact optimum by max-flow.
    Oracle {
        #[command(flatten)]
        source: SourceArgs,
        /// Also print the witness edges.
        #[arg(long)]
        witness: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fractional allocation followed by best-of randomized rounding.
    Round {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Augmenting-walk improvement of an integral allocation.
    Boost {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Feasibility and approximation audit of a stored allocation.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        allocation: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SourceArgs {
    /// Instance file in the text format.
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    instance: Option<PathBuf>,
    /// Generator spec.
    #[arg(long = "gen")]
    gen: Option<String>,
}

impl SourceArgs {
    fn source(&self) -> Result<InstanceSource> {
        match (&self.instance, &self.gen) {
            (Some(path), _) => Ok(InstanceSource::File(path.clone())),
            (None, Some(spec)) => Ok(InstanceSource::Gen(spec.parse()?)),
            (None, None) => Err(Error::InvalidConfig("need --instance or --gen".into())),
        }
    }
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long)]
    tau: Option<u32>,
    #[arg(long)]
    copies: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_iterations: Option<usize>,
}

impl ParamArgs {
    fn spec(&self, source: InstanceSource, pipeline: Pipeline) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(source, pipeline);
        spec.epsilon = self.eps;
        spec.alpha = self.alpha;
        spec.tau = self.tau;
        spec.copies = self.copies;
        spec.seed = self.seed;
        spec.max_iterations = self.max_iterations;
        spec
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_instance(path: &Path) -> Result<AllocationInstance> {
    AllocationInstance::read_text(BufReader::new(File::open(path)?))
}

fn feasibility(outcome: &ExperimentOutcome) -> Result<()> {
    if outcome.report.feasible {
        Ok(())
    } else {
        Err(Error::Infeasible(format!(
            "{} pipeline output failed validation",
            outcome.report.pipeline
        )))
    }
}

fn run_and_report(spec: &ExperimentSpec, out: Option<&Path>) -> Result<ExperimentOutcome> {
    let outcome = run_experiment(spec)?;
    emit(out, &(outcome.report.to_json()? + "\n"))?;
    Ok(outcome)
}

fn write_traces(outcome: &ExperimentOutcome, trace: Option<&Path>) -> Result<()> {
    if let Some(path) = trace {
        let w = create(path)?;
        if outcome.report.pipeline == Pipeline::Boost {
            write_boost_trace(w, &outcome.boost_trace)?;
        } else {
            write_trace(w, &outcome.round_trace)?;
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { spec, out } => {
            let spec: GenSpec = spec.parse()?;
            let generated = generate(&spec)?;
            if let Some(warning) = generated.warning {
                eprintln!("warning: {warning:?} for `{spec}`");
            }
            emit(out.as_deref(), &generated.instance.to_text())
        }
        Command::Run {
            source,
            params,
            pipeline,
            out,
            trace,
            save_allocation,
        } => {
            let spec = params.spec(source.source()?, pipeline.parse()?);
            let outcome = run_and_report(&spec, out.as_deref())?;
            write_traces(&outcome, trace.as_deref())?;
            if let Some(path) = save_allocation {
                let mut w = create(&path)?;
                write_allocation(&mut w, &outcome.instance, &outcome.allocation)?;
                w.flush()?;
            }
            feasibility(&outcome)
        }
        Command::Sweep {
            source,
            params,
            pipeline,
            vary,
            out,
        } => {
            let spec = params.spec(source.source()?, pipeline.parse()?);
            let grid = vary.iter().map(|v| parse_vary(v)).collect::<Result<Vec<_>>>()?;
            let rows = sweep(&spec, &grid)?;
            let mut buf = Vec::new();
            write_sweep_csv(&mut buf, &grid, &rows)?;
            emit(out.as_deref(), &String::from_utf8_lossy(&buf))?;
            if rows.iter().all(|r| r.report.feasible) {
                Ok(())
            } else {
                Err(Error::Infeasible(
                    "a sweep point produced an infeasible allocation".into(),
                ))
            }
        }
        Command::Oracle { source, witness, out } => {
            let instance = source.source()?.load()?;
            let result = opt_flow(&instance);
            let mut text = format!("opt_size {}\n", result.opt_size);
            if witness {
                for &e in result.witness.edges() {
                    let (u, v) = instance.edge(e);
                    text.push_str(&format!("e {u} {v}\n"));
                }
            }
            emit(out.as_deref(), &text)
        }
        Command::Round { source, params, out } => {
            let spec = params.spec(source.source()?, Pipeline::Round);
            let outcome = run_experiment(&spec)?;
            let r = &outcome.report;
            eprintln!(
                "kept {} of {} sampled edges ({} dropped at heavy vertices), fractional weight {}",
                r.weight,
                r.sampled_count.unwrap_or(0),
                r.dropped_heavy_count.unwrap_or(0),
                r.fractional_weight.unwrap_or(0.0)
            );
            emit(out.as_deref(), &(outcome.report.to_json()? + "\n"))?;
            feasibility(&outcome)
        }
        Command::Boost {
            source,
            params,
            out,
            trace,
        } => {
            let spec = params.spec(source.source()?, Pipeline::Boost);
            let outcome = run_and_report(&spec, out.as_deref())?;
            write_traces(&outcome, trace.as_deref())?;
            feasibility(&outcome)
        }
        Command::Verify {
            instance,
            allocation,
            out,
        } => {
            let instance = load_instance(&instance)?;
            let alloc = read_allocation(BufReader::new(File::open(&allocation)?), &instance)?;
            let report = verify(&instance, &alloc);
            emit(out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
            if report.feasible {
                Ok(())
            } else {
                Err(Error::Infeasible(format!("{} fails validation", allocation.display())))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
