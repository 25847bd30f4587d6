//! Command-line front end.
//!
//! Three subcommands over the same problem files:
//!
//! * `verify` — decide the outer constraint `g(p₁, …, p_v) ≥ 0` with one
//!   anytime bounding engine per term; exit code 0 = satisfied,
//!   1 = violated, 2 = unknown, 3+ = error.
//! * `bound` — stream converging `[l, u]` bounds on a single term
//!   probability; exits 0 on any clean stop.
//! * `enumerate` — exact baseline for all-discrete problems; walks every
//!   joint input point and decides `g` from exact probabilities.
//!
//! Reports are JSON (stdout or `--out`), per-iteration traces are CSV
//! (`--trace`), and `--no-timings` strips wall-clock fields so identical
//! configurations produce byte-identical output. Log verbosity comes from
//! the `RUST_LOG` environment variable.

mod enumerate;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use veriprob_core::{
    bound_term, load_problem, verify, verify_concurrent, verify_with_sink, BoundMethod, Budget,
    EngineConfig, ProgressPoint, SelectHeuristic, SplitHeuristic, StopReason, VerdictStatus,
    VerifyConfig,
};

use report::{
    emit, stop_reason_label, write_bound_trace, write_verify_trace, BoundReport, ConfigEcho,
    EnumTermDto, EnumerateReport, TermStateDto, VerifyReport,
};

#[derive(Parser)]
#[command(
    name = "veriprob",
    version,
    about = "Anytime probabilistic verification of feed-forward neural networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide g(p1, …, pv) ≥ 0 over the problem's term probabilities.
    Verify(VerifyCmd),
    /// Converging [l, u] bounds on a single term probability.
    Bound(BoundCmd),
    /// Exact verdict by walking every joint input point (all-discrete only).
    Enumerate(EnumerateCmd),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum BoundsOpt {
    /// Interval propagation.
    Ia,
    /// Backward linear relaxation, concretised over each box.
    Crown,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SelectOpt {
    /// Heaviest branch first.
    Prob,
    /// Mass discounted by bound looseness.
    ProbLogBounds,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SplitOpt {
    /// Bisect the widest edge.
    LongestEdge,
    /// Pick the dimension whose worse child is closest to being pruned.
    Babsb,
}

#[derive(Args)]
struct EngineOpts {
    /// Bounding method for batch re-evaluation.
    #[arg(long = "bounds", value_enum, default_value_t = BoundsOpt::Crown)]
    bounds: BoundsOpt,
    /// How branches are picked into a batch.
    #[arg(long, value_enum, default_value_t = SelectOpt::Prob)]
    select: SelectOpt,
    /// How a branch is split in two.
    #[arg(long, value_enum, default_value_t = SplitOpt::LongestEdge)]
    split: SplitOpt,
    /// Branches re-bounded per iteration.
    #[arg(short = 'N', long, value_name = "N", default_value_t = 128)]
    batch_size: usize,
    /// Satisfaction margin: prove g ≥ EPS instead of g ≥ 0.
    #[arg(long, value_name = "EPS", default_value_t = 0.0)]
    epsilon: f64,
    /// Iteration cap per term. Defaults to 10000 when no other budget
    /// flag is given; unlimited otherwise.
    #[arg(long, value_name = "T")]
    max_iterations: Option<u64>,
    /// Wall-clock budget in seconds, shared across all terms.
    #[arg(long, value_name = "SECS")]
    max_seconds: Option<f64>,
    /// Stop a term once u − l is this small.
    #[arg(long, value_name = "W")]
    target_width: Option<f64>,
    /// Seed for split tie-breaking.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EngineOpts {
    fn verify_config(&self) -> VerifyConfig {
        let mut budget = Budget {
            max_iterations: self.max_iterations,
            max_time: None,
            target_width: self.target_width,
        };
        // A run must have some stopping criterion, or an instance with an
        // exactly-zero margin would spin forever.
        if budget.max_iterations.is_none()
            && budget.target_width.is_none()
            && self.max_seconds.is_none()
        {
            budget.max_iterations = Some(10_000);
        }
        VerifyConfig {
            engine: EngineConfig {
                batch_size: self.batch_size,
                method: match self.bounds {
                    BoundsOpt::Ia => BoundMethod::Ia,
                    BoundsOpt::Crown => BoundMethod::Crown,
                },
                select: match self.select {
                    SelectOpt::Prob => SelectHeuristic::Prob,
                    SelectOpt::ProbLogBounds => SelectHeuristic::ProbLogBounds,
                },
                split: match self.split {
                    SplitOpt::LongestEdge => SplitHeuristic::LongestEdge,
                    SplitOpt::Babsb => SplitHeuristic::BaBSB,
                },
                budget,
                seed: self.seed,
            },
            max_time: self.max_seconds.map(Duration::from_secs_f64),
            epsilon: self.epsilon,
        }
    }

    fn echo(&self) -> ConfigEcho {
        let config = self.verify_config();
        ConfigEcho {
            bounds: match self.bounds {
                BoundsOpt::Ia => "ia",
                BoundsOpt::Crown => "crown",
            },
            select: match self.select {
                SelectOpt::Prob => "prob",
                SelectOpt::ProbLogBounds => "prob-log-bounds",
            },
            split: match self.split {
                SplitOpt::LongestEdge => "longest-edge",
                SplitOpt::Babsb => "babsb",
            },
            batch_size: self.batch_size,
            epsilon: self.epsilon,
            seed: self.seed,
            max_iterations: config.engine.budget.max_iterations,
            max_seconds: self.max_seconds,
            target_width: self.target_width,
        }
    }
}

#[derive(Args)]
struct OutputOpts {
    /// Write the JSON report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Stream per-iteration progress to a CSV file.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Omit wall-clock fields from the report and trace, for
    /// byte-reproducible output.
    #[arg(long)]
    no_timings: bool,
}

#[derive(Args)]
struct VerifyCmd {
    /// Problem file (JSON).
    problem: PathBuf,
    #[command(flatten)]
    engine: EngineOpts,
    #[command(flatten)]
    output: OutputOpts,
    /// Run the per-term engines on separate OS threads. The verdict is
    /// unchanged; iteration counts at the stopping point may differ.
    #[arg(long, conflicts_with = "trace")]
    threads: bool,
}

#[derive(Args)]
struct BoundCmd {
    /// Problem file (JSON).
    problem: PathBuf,
    /// 1-based index of the term to bound.
    #[arg(long, default_value_t = 1)]
    term: usize,
    #[command(flatten)]
    engine: EngineOpts,
    #[command(flatten)]
    output: OutputOpts,
}

#[derive(Args)]
struct EnumerateCmd {
    /// Problem file (JSON).
    problem: PathBuf,
    /// Satisfaction margin: require g ≥ EPS instead of g ≥ 0.
    #[arg(long, value_name = "EPS", default_value_t = 0.0)]
    epsilon: f64,
    /// Refuse instances with more joint points than this, per term.
    #[arg(long, default_value_t = 10_000_000)]
    cap: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Omit wall-clock fields from the report.
    #[arg(long)]
    no_timings: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Verify(cmd) => cmd_verify(cmd),
        Command::Bound(cmd) => cmd_bound(cmd),
        Command::Enumerate(cmd) => cmd_enumerate(cmd),
    }
}

fn status_exit(status: VerdictStatus) -> ExitCode {
    match status {
        VerdictStatus::Satisfied => ExitCode::SUCCESS,
        VerdictStatus::Violated => ExitCode::from(1),
        VerdictStatus::Unknown => ExitCode::from(2),
    }
}

fn cmd_verify(cmd: VerifyCmd) -> Result<ExitCode> {
    let started = Instant::now();
    let problem = load_problem(&cmd.problem)
        .with_context(|| format!("loading {}", cmd.problem.display()))?;
    let config = cmd.engine.verify_config();
    log::info!(
        "verifying {} ({} terms)",
        cmd.problem.display(),
        problem.terms().len()
    );

    let mut trace_rows: Vec<(usize, ProgressPoint)> = Vec::new();
    let verdict = if cmd.threads {
        verify_concurrent(&problem, &config)?
    } else if cmd.output.trace.is_some() {
        verify_with_sink(&problem, &config, |term, point| {
            trace_rows.push((term + 1, *point))
        })?
    } else {
        verify(&problem, &config)?
    };
    if let Some(path) = &cmd.output.trace {
        write_verify_trace(path, &trace_rows, cmd.output.no_timings)
            .with_context(|| format!("writing trace to {}", path.display()))?;
    }

    log::info!("verdict: {:?} ({:?})", verdict.status, verdict.stop_reason);
    let report = VerifyReport {
        command: "verify",
        problem: cmd.problem.display().to_string(),
        config: cmd.engine.echo(),
        status: verdict.status,
        stop_reason: verdict.stop_reason,
        g: verdict.g_bounds.into(),
        terms: verdict.per_term.iter().map(TermStateDto::from).collect(),
        warnings: verdict.warnings,
        elapsed_ms: (!cmd.output.no_timings).then(|| started.elapsed().as_secs_f64() * 1e3),
    };
    emit(&report, cmd.output.out.as_deref())?;
    Ok(status_exit(report.status))
}

fn cmd_bound(cmd: BoundCmd) -> Result<ExitCode> {
    let started = Instant::now();
    ensure!(cmd.term >= 1, "term indices are 1-based");
    let problem = load_problem(&cmd.problem)
        .with_context(|| format!("loading {}", cmd.problem.display()))?;
    ensure!(
        cmd.term <= problem.terms().len(),
        "no term {} (the problem has {})",
        cmd.term,
        problem.terms().len()
    );
    let config = cmd.engine.verify_config();

    let run = bound_term(&problem, cmd.term - 1, &config)?;
    if let Some(path) = &cmd.output.trace {
        write_bound_trace(path, &run.trace, cmd.output.no_timings)
            .with_context(|| format!("writing trace to {}", path.display()))?;
    }

    let mut warnings = Vec::new();
    if run.ia_fallback {
        warnings.push(
            "network activations unsupported by the backward pass; interval propagation used instead"
                .to_string(),
        );
    }
    let report = BoundReport {
        command: "bound",
        problem: cmd.problem.display().to_string(),
        term: cmd.term,
        config: cmd.engine.echo(),
        l: run.state.l,
        u: run.state.u,
        iterations: run.state.t,
        stop_reason: stop_reason_label(&run.stop),
        parked_mass: match run.stop {
            StopReason::Exhausted { parked_mass } => Some(parked_mass),
            _ => None,
        },
        warnings,
        elapsed_ms: (!cmd.output.no_timings).then(|| started.elapsed().as_secs_f64() * 1e3),
    };
    emit(&report, cmd.output.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_enumerate(cmd: EnumerateCmd) -> Result<ExitCode> {
    let started = Instant::now();
    let problem = load_problem(&cmd.problem)
        .with_context(|| format!("loading {}", cmd.problem.display()))?;
    let outcome = enumerate::enumerate(&problem, cmd.cap, cmd.epsilon)?;

    let report = EnumerateReport {
        command: "enumerate",
        problem: cmd.problem.display().to_string(),
        epsilon: cmd.epsilon,
        status: outcome.status,
        g: outcome.g.map(report::Endpoint),
        terms: outcome
            .terms
            .iter()
            .map(|t| EnumTermDto {
                p: t.probability,
                points: t.points,
            })
            .collect(),
        warnings: outcome.warnings,
        elapsed_ms: (!cmd.no_timings).then(|| started.elapsed().as_secs_f64() * 1e3),
    };
    emit(&report, cmd.out.as_deref())?;
    Ok(status_exit(report.status))
}
