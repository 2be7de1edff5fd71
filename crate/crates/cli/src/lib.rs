//! Subcommands behind the `diamondp` binary: simulate a scenario, sweep a
//! template over seeds, and re-check a saved trace.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use diamondp::channel::ConformanceViolation;
use diamondp::oracle::{self, GapViolation, LemmaReport, Status, Verdict};
use diamondp::scenario::{Scenario, ScenarioError, ScenarioTemplate};
use diamondp::sim::{self, SimError};
use diamondp::trace::{Trace, TraceIoError};
use diamondp::{NodeId, Time};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Largest graph for which the brute-force path checks are attempted.
pub const MAX_LEMMA_NODES: usize = 12;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
    #[error("trace {path}: {source}")]
    Trace { path: String, source: TraceIoError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        1
    }
}

/// Overall outcome of a checked run, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Outcome {
    Converged,
    InconclusiveHorizon,
    Violation,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Converged => 0,
            Outcome::Violation => 2,
            Outcome::InconclusiveHorizon => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChannelFailure {
    pub from: NodeId,
    pub to: NodeId,
    pub violation: String,
}

/// Everything the oracle has to say about one trace.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub seed: u64,
    pub outcome: Outcome,
    pub verdict: Verdict,
    pub channel_failures: Vec<ChannelFailure>,
    pub delivery_gaps: Vec<GapViolation>,
    /// Present for converged runs small enough for brute-force enumeration.
    pub lemmas: Option<LemmaReport>,
    pub sanity: Vec<String>,
}

pub fn check_trace(trace: &Trace, scenario: &Scenario) -> Result<Report, CliError> {
    let fg = oracle::final_graph(scenario);
    let window = scenario.stability_window();
    let verdict = oracle::check_convergence(trace, &fg, window)?;
    let channel_failures: Vec<ChannelFailure> = oracle::check_channels(trace, scenario)
        .into_iter()
        .map(|((from, to), v): ((NodeId, NodeId), ConformanceViolation)| ChannelFailure { from, to, violation: v.to_string() })
        .collect();
    let (delivery_gaps, lemmas) = match verdict.t_f_observed {
        Some(t_f) => {
            let gaps = oracle::check_delivery_gaps(trace, scenario, t_f);
            let lemmas = (scenario.n() <= MAX_LEMMA_NODES && !trace.final_states.is_empty())
                .then(|| oracle::check_lemma_invariants(trace, &fg, window));
            (gaps, lemmas)
        }
        None => (Vec::new(), None),
    };
    let sanity = oracle::check_trace_sanity(trace, scenario);

    let mut outcome = match verdict.status {
        Status::Converged => Outcome::Converged,
        Status::InconclusiveHorizon => Outcome::InconclusiveHorizon,
        Status::Violation => Outcome::Violation,
    };
    let broken = !channel_failures.is_empty()
        || !delivery_gaps.is_empty()
        || !sanity.is_empty()
        || lemmas.as_ref().is_some_and(|l| !l.is_ok());
    if broken {
        outcome = Outcome::Violation;
    }
    Ok(Report { seed: trace.seed, outcome, verdict, channel_failures, delivery_gaps, lemmas, sanity })
}

pub fn simulate(scenario: &Scenario) -> Result<(Trace, Report), CliError> {
    let trace = sim::run(scenario)?;
    let report = check_trace(&trace, scenario)?;
    Ok((trace, report))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    pub horizon: Option<Time>,
    pub seed: Option<u64>,
}

/// Simulates one scenario and writes `trace.jsonl`, `verdict.json` and
/// the resolved `scenario.toml` into the output directory.
pub fn cmd_run(scenario_path: &Path, opts: &RunOptions) -> Result<Report, CliError> {
    let template = ScenarioTemplate::load(scenario_path)?;
    let mut scenario = match opts.seed {
        Some(seed) => template.instantiate(seed)?,
        None => template.scenario()?,
    };
    if let Some(h) = opts.horizon {
        scenario = scenario.with_horizon(h)?;
    }
    let (trace, report) = simulate(&scenario)?;

    fs::create_dir_all(&opts.out).map_err(|source| io_err(&opts.out, source))?;
    let trace_path = opts.out.join("trace.jsonl");
    let file = File::create(&trace_path).map_err(|source| io_err(&trace_path, source))?;
    trace.write_jsonl(BufWriter::new(file)).map_err(|source| io_err(&trace_path, source))?;
    write_json(&opts.out.join("verdict.json"), &report)?;
    let scenario_out = opts.out.join("scenario.toml");
    fs::write(&scenario_out, scenario.to_toml()).map_err(|source| io_err(&scenario_out, source))?;
    Ok(report)
}

/// Re-runs the oracle on a saved trace.
pub fn cmd_check(trace_path: &Path, scenario_path: &Path) -> Result<Report, CliError> {
    let file = File::open(trace_path).map_err(|source| io_err(trace_path, source))?;
    let trace = Trace::read_jsonl(BufReader::new(file))
        .map_err(|source| CliError::Trace { path: trace_path.display().to_string(), source })?;
    let scenario = ScenarioTemplate::load(scenario_path)?.instantiate(trace.seed)?.with_horizon(trace.horizon)?;
    check_trace(&trace, &scenario)
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub n: usize,
    pub crashes: usize,
    pub outcome: Outcome,
    pub t_f: Option<Time>,
    pub channel_failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub runs: Vec<SeedResult>,
    pub converged: usize,
    pub violations: usize,
    pub inconclusive: usize,
    pub pass_rate: Option<f64>,
    pub t_f_min: Option<Time>,
    pub t_f_median: Option<Time>,
    pub t_f_max: Option<Time>,
}

impl SweepSummary {
    pub fn outcome(&self) -> Outcome {
        self.runs.iter().map(|r| r.outcome).max().unwrap_or(Outcome::Converged)
    }

    /// Non-zero only when some seed produced a violation.
    pub fn exit_code(&self) -> i32 {
        if self.violations > 0 {
            2
        } else {
            0
        }
    }
}

pub fn sweep(template: &ScenarioTemplate, seeds: u64, jobs: usize) -> Result<SweepSummary, CliError> {
    let run_one = |seed: u64| -> Result<SeedResult, CliError> {
        let scenario = template.instantiate(seed)?;
        let (_, report) = simulate(&scenario)?;
        Ok(SeedResult {
            seed,
            n: scenario.n(),
            crashes: scenario.crashes().len(),
            outcome: report.outcome,
            t_f: report.verdict.t_f_observed,
            channel_failures: report.channel_failures.len(),
        })
    };
    let runs: Vec<SeedResult> = if jobs <= 1 {
        (0..seeds).map(run_one).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))?;
        // collect() keeps seed order regardless of completion order
        pool.install(|| (0..seeds).into_par_iter().map(run_one).collect::<Result<_, _>>())?
    };
    Ok(summarize(runs))
}

pub fn cmd_sweep(template_path: &Path, seeds: u64, jobs: usize) -> Result<SweepSummary, CliError> {
    let template = ScenarioTemplate::load(template_path)?;
    sweep(&template, seeds, jobs)
}

fn summarize(runs: Vec<SeedResult>) -> SweepSummary {
    let count = |o: Outcome| runs.iter().filter(|r| r.outcome == o).count();
    let (converged, violations, inconclusive) =
        (count(Outcome::Converged), count(Outcome::Violation), count(Outcome::InconclusiveHorizon));
    let mut tf: Vec<Time> = runs.iter().filter_map(|r| r.t_f).collect();
    tf.sort();
    let pass_rate = (!runs.is_empty()).then(|| converged as f64 / runs.len() as f64);
    SweepSummary {
        converged,
        violations,
        inconclusive,
        pass_rate,
        t_f_min: tf.first().copied(),
        t_f_median: tf.get(tf.len() / 2).copied(),
        t_f_max: tf.last().copied(),
        runs,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(|source| io_err(path, source))
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), source }
}

pub fn describe(report: &Report) -> String {
    let mut out = format!("outcome: {:?}\n", report.outcome);
    match report.verdict.t_f_observed {
        Some(t) => out.push_str(&format!("t_f observed: {t}\n")),
        None => out.push_str("t_f observed: none\n"),
    }
    for v in &report.verdict.violations {
        out.push_str(&format!("  {:?}: node {} about {} since {}\n", v.kind, v.node, v.target, v.time));
    }
    for c in &report.channel_failures {
        out.push_str(&format!("  channel {}->{}: {}\n", c.from, c.to, c.violation));
    }
    for g in &report.delivery_gaps {
        out.push_str(&format!("  delivery gap {}->{}: {} > {} at {}\n", g.from, g.to, g.gap, g.bound, g.at));
    }
    if let Some(l) = &report.lemmas {
        if !l.is_ok() {
            out.push_str(&format!("  lemma checks failed: {l:?}\n"));
        }
    }
    for s in &report.sanity {
        out.push_str(&format!("  trace: {s}\n"));
    }
    out
}
