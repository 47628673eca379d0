//! Command-line front end: `gen-graph`, `run`, `sweep` and `oracle`.
//!
//! Exit codes: 0 success, 1 a round-robin run exceeded its deterministic
//! bound, 2 usage error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    check_bounds, hindsight_global, BoundFormula, BoundReport, DEFAULT_CONSTANT,
};
use crate::engine::{self, default_max_rounds, RunConfig, RunResult, DEFAULT_PAYLOAD_LEN};
use crate::field::FieldSpec;
use crate::graph::{GraphFamily, Topology};
use crate::par::{self, Execution};
use crate::protocols::{Protocol, SourceAssignment};

pub const EXIT_OK: i32 = 0;
pub const EXIT_BOUND_BREACH: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Engine(#[from] engine::EngineError),
    #[error(transparent)]
    Analysis(#[from] crate::analysis::AnalysisError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        EXIT_USAGE
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(
    name = "algossip",
    version,
    about = "k-message multicast simulator and bound checker"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print a generated graph in edge-list form.
    GenGraph(GenGraphArgs),
    /// Run one experiment and print its result as JSON.
    Run(RunArgs),
    /// Run a campaign described by a TOML spec; CSV rows plus bound reports.
    Sweep(SweepArgs),
    /// Compare algebraic gossip completion with the hindsight routing time.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct GenGraphArgs {
    #[arg(long)]
    pub graph: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// All messages at the lowest-numbered node of maximum eccentricity.
    #[default]
    Eccentric,
    /// Message j at node floor((j - 1) n / k).
    Spread,
}

impl Placement {
    pub fn assign(&self, g: &Topology, k: usize) -> SourceAssignment {
        match self {
            Placement::Eccentric => SourceAssignment::single(g.most_eccentric_node(), k),
            Placement::Spread => SourceAssignment::spread(g.n(), k),
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// `family:params` or `file:PATH`.
    #[arg(long)]
    pub graph: String,
    #[arg(long, value_parser = parse_protocol)]
    pub protocol: Protocol,
    #[arg(long)]
    pub k: usize,
    /// Field degree m for GF(2^m): 1, 8 or 16.
    #[arg(long, default_value_t = 1)]
    pub field: u32,
    #[arg(long, default_value_t = DEFAULT_PAYLOAD_LEN)]
    pub payload: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_CONSTANT)]
    pub const_c: u64,
    #[arg(long)]
    pub max_rounds: Option<u64>,
    #[arg(long, value_enum, default_value_t = Placement::Eccentric)]
    pub sources: Placement,
    /// Check against this bound instead of the protocol default.
    #[arg(long, value_parser = parse_formula)]
    pub bound: Option<BoundFormula>,
    /// Include the exchange trace in the output.
    #[arg(long)]
    pub trace: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for per-node work inside a round.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// TOML campaign spec.
    pub spec: PathBuf,
    /// CSV output path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON bound reports output path.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Trials run concurrently on at most this many threads.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub graph: String,
    #[arg(long, value_parser = parse_protocol, default_value = "ag")]
    pub protocol: Protocol,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 8)]
    pub field: u32,
    #[arg(long, default_value_t = DEFAULT_PAYLOAD_LEN)]
    pub payload: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seeds seed..seed+trials; more than one prints an aggregate.
    #[arg(long, default_value_t = 1)]
    pub trials: u64,
    #[arg(long)]
    pub max_rounds: Option<u64>,
    #[arg(long, value_enum, default_value_t = Placement::Spread)]
    pub sources: Placement,
    /// Accepted for symmetry with `run`; the oracle always records traces.
    #[arg(long)]
    pub trace: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    s.parse()
}

fn parse_formula(s: &str) -> Result<BoundFormula, String> {
    s.parse()
}

/// A graph argument: a generator string or `file:PATH`.
pub fn load_graph(spec: &str) -> Result<Topology, CliError> {
    if let Some(path) = spec.strip_prefix("file:") {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.into(),
            source,
        })?;
        return Topology::from_edge_list(&text).map_err(|e| usage(format!("{path}: {e}")));
    }
    spec.parse::<GraphFamily>()
        .and_then(|f| f.generate())
        .map_err(|e| usage(format!("--graph {spec}: {e}")))
}

fn field_spec(m: u32) -> Result<FieldSpec, CliError> {
    FieldSpec::new(m).map_err(|e| usage(e.to_string()))
}

fn write_output(out: &Option<PathBuf>, stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, text),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io {
                path: "<stdout>".into(),
                source,
            }),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GraphStats {
    pub spec: String,
    pub n: usize,
    pub max_degree: usize,
    pub diameter: usize,
}

impl GraphStats {
    fn of(spec: &str, g: &Topology) -> Self {
        GraphStats {
            spec: spec.to_string(),
            n: g.n(),
            max_degree: g.max_degree(),
            diameter: g.diameter(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BoundSummary {
    pub formula: BoundFormula,
    pub constant: Option<u64>,
    pub value: u64,
}

/// JSON printed by `run`.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub graph: GraphStats,
    pub protocol: Protocol,
    pub k: usize,
    pub seed: u64,
    pub field: u32,
    pub completed: bool,
    pub rounds: Option<u64>,
    pub bound: BoundSummary,
    pub pass: bool,
    pub result: RunResult,
}

pub fn cmd_gen_graph(args: &GenGraphArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let g = load_graph(&args.graph)?;
    write_output(&args.out, stdout, &g.to_edge_list())?;
    Ok(EXIT_OK)
}

pub fn cmd_run(args: &RunArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    if args.k < 1 {
        return Err(usage("--k must be at least 1"));
    }
    let g = Arc::new(load_graph(&args.graph)?);
    let field = field_spec(args.field)?;
    let sources = args.sources.assign(&g, args.k);
    let mut cfg = RunConfig::new(args.protocol, g.clone(), sources)
        .with_seed(args.seed)
        .with_field(field)
        .with_payload_len(args.payload)
        .with_trace(args.trace)
        .with_execution(if args.workers.is_some() {
            Execution::best_available()
        } else {
            Execution::Sequential
        });
    if let Some(m) = args.max_rounds {
        cfg = cfg.with_max_rounds(m);
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let result = par::with_workers(args.workers, || engine::run(&cfg))?;
    let report = check_bounds(
        std::slice::from_ref(&result),
        &g,
        &args.graph,
        args.k,
        args.protocol,
        args.bound,
        args.const_c,
    )?;
    let out = RunReport {
        graph: GraphStats::of(&args.graph, &g),
        protocol: args.protocol,
        k: args.k,
        seed: args.seed,
        field: args.field,
        completed: result.completed(),
        rounds: report.trials[0].observed,
        bound: BoundSummary {
            formula: report.formula,
            constant: report.constant,
            value: report.trials[0].bound,
        },
        pass: report.pass,
        result,
    };
    let text = serde_json::to_string_pretty(&out).expect("serializable") + "\n";
    write_output(&args.out, stdout, &text)?;
    Ok(if report.formula.is_deterministic() && !report.pass {
        EXIT_BOUND_BREACH
    } else {
        EXIT_OK
    })
}

/// A sweep campaign, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub graphs: Vec<String>,
    pub protocols: Vec<Protocol>,
    pub k: Vec<usize>,
    #[serde(default = "one")]
    pub trials: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "one_u32")]
    pub field: u32,
    #[serde(default = "default_payload")]
    pub payload: usize,
    #[serde(default = "default_c")]
    pub const_c: u64,
    #[serde(default)]
    pub sources: Placement,
    #[serde(default)]
    pub max_rounds: Option<u64>,
    /// Overrides the default bound for algebraic gossip (`thm1` or `thm2`).
    #[serde(default)]
    pub ag_bound: Option<BoundFormula>,
}

fn one() -> u64 {
    1
}
fn one_u32() -> u32 {
    1
}
fn default_payload() -> usize {
    DEFAULT_PAYLOAD_LEN
}
fn default_c() -> u64 {
    DEFAULT_CONSTANT
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| usage(format!("sweep spec: {e}")))?;
        if spec.trials < 1 {
            return Err(usage("sweep spec: trials must be at least 1"));
        }
        if spec.graphs.is_empty() || spec.protocols.is_empty() || spec.k.is_empty() {
            return Err(usage(
                "sweep spec: graphs, protocols and k must be non-empty",
            ));
        }
        if spec.k.contains(&0) {
            return Err(usage("sweep spec: k must be at least 1"));
        }
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRow {
    pub graph: String,
    pub n: usize,
    pub delta: usize,
    pub diameter: usize,
    pub protocol: Protocol,
    pub k: usize,
    pub trial: u64,
    pub seed: u64,
    pub rounds: Option<u64>,
    pub bound: u64,
    pub pass: bool,
}

pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub reports: Vec<BoundReport>,
    /// Some deterministic bound was exceeded.
    pub deterministic_breach: bool,
}

/// Expands the cross product and runs every trial. Trials run concurrently;
/// rows come back sorted by (graph order, protocol, k, trial).
pub fn run_sweep(spec: &ExperimentSpec, workers: Option<usize>) -> Result<SweepOutcome, CliError> {
    let field = field_spec(spec.field)?;
    let graphs: Vec<(String, Arc<Topology>)> = spec
        .graphs
        .iter()
        .map(|s| load_graph(s).map(|g| (s.clone(), Arc::new(g))))
        .collect::<Result<_, _>>()?;

    struct Job {
        cell: usize,
        trial: u64,
        config: RunConfig,
    }
    let mut cells = Vec::new();
    let mut jobs = Vec::new();
    for (gi, (_, g)) in graphs.iter().enumerate() {
        for &protocol in &spec.protocols {
            for &k in &spec.k {
                let cell = cells.len();
                cells.push((gi, protocol, k));
                for trial in 0..spec.trials {
                    let mut config = RunConfig::new(protocol, g.clone(), spec.sources.assign(g, k))
                        .with_seed(spec.base_seed + trial)
                        .with_field(field)
                        .with_payload_len(spec.payload);
                    config.max_rounds = spec.max_rounds.unwrap_or_else(|| default_max_rounds(g, k));
                    config.validate().map_err(|e| usage(e.to_string()))?;
                    jobs.push(Job {
                        cell,
                        trial,
                        config,
                    });
                }
            }
        }
    }

    let results: Vec<Result<RunResult, engine::EngineError>> = par::with_workers(workers, || {
        par::map(Execution::best_available(), &jobs, |j| {
            engine::run(&j.config)
        })
    });

    let mut per_cell: Vec<Vec<(u64, RunResult)>> = vec![Vec::new(); cells.len()];
    for (job, result) in jobs.iter().zip(results) {
        per_cell[job.cell].push((job.trial, result?));
    }

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut deterministic_breach = false;
    for (cell, trials) in per_cell.into_iter().enumerate() {
        let (gi, protocol, k) = cells[cell];
        let (label, g) = &graphs[gi];
        let formula = (protocol == Protocol::Ag)
            .then_some(spec.ag_bound)
            .flatten();
        let results: Vec<RunResult> = trials.iter().map(|(_, r)| r.clone()).collect();
        let report = check_bounds(&results, g, label, k, protocol, formula, spec.const_c)?;
        for ((trial, _), check) in trials.iter().zip(&report.trials) {
            rows.push(SweepRow {
                graph: label.clone(),
                n: g.n(),
                delta: g.max_degree(),
                diameter: g.diameter(),
                protocol,
                k,
                trial: *trial,
                seed: check.seed,
                rounds: check.observed,
                bound: check.bound,
                pass: check.pass,
            });
        }
        deterministic_breach |= report.formula.is_deterministic() && !report.pass;
        reports.push(report);
    }
    Ok(SweepOutcome {
        rows,
        reports,
        deterministic_breach,
    })
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

pub fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let text = fs::read_to_string(&args.spec).map_err(|source| CliError::Io {
        path: args.spec.display().to_string(),
        source,
    })?;
    let spec = ExperimentSpec::parse(&text)?;
    let outcome = run_sweep(&spec, args.workers)?;
    write_output(&args.out, stdout, &rows_to_csv(&outcome.rows))?;
    if let Some(path) = &args.report {
        let json = serde_json::to_string_pretty(&outcome.reports).expect("serializable") + "\n";
        write_file(path, &json)?;
    }
    Ok(if outcome.deterministic_breach {
        EXIT_BOUND_BREACH
    } else {
        EXIT_OK
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleReport {
    pub seed: u64,
    pub gossip_rounds: Option<u64>,
    pub hindsight_rounds: Option<u64>,
    pub equal: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OracleSummary {
    pub graph: GraphStats,
    pub k: usize,
    pub field: u32,
    pub trials: Vec<OracleReport>,
    pub equal_fraction: f64,
    /// The hindsight time never exceeded the gossip completion time.
    pub hindsight_never_later: bool,
}

/// One gossip run with its trace, then the hindsight oracle over that trace.
pub fn oracle_trial(config: &RunConfig) -> Result<OracleReport, CliError> {
    let config = config.clone().with_trace(true);
    let result = engine::run(&config)?;
    let trace = result.trace.as_ref().expect("trace recorded");
    let hindsight = hindsight_global(
        trace,
        &config.sources,
        config.topology.n(),
        config.execution,
    );
    Ok(OracleReport {
        seed: config.seed,
        gossip_rounds: result.completion_round,
        hindsight_rounds: hindsight,
        equal: result.completion_round.is_some() && result.completion_round == hindsight,
    })
}

pub fn cmd_oracle(args: &OracleArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    if args.k < 1 {
        return Err(usage("--k must be at least 1"));
    }
    if args.protocol != Protocol::Ag {
        return Err(usage(
            "the hindsight oracle compares algebraic gossip (--protocol ag)",
        ));
    }
    if args.trials < 1 {
        return Err(usage("--trials must be at least 1"));
    }
    let g = Arc::new(load_graph(&args.graph)?);
    let field = field_spec(args.field)?;
    let mut base = RunConfig::new(Protocol::Ag, g.clone(), args.sources.assign(&g, args.k))
        .with_field(field)
        .with_payload_len(args.payload);
    if let Some(m) = args.max_rounds {
        base = base.with_max_rounds(m);
    }
    base.validate().map_err(|e| usage(e.to_string()))?;
    let configs: Vec<RunConfig> = (0..args.trials)
        .map(|i| base.clone().with_seed(args.seed + i))
        .collect();
    let reports: Vec<OracleReport> = par::with_workers(args.workers, || {
        par::map(Execution::best_available(), &configs, oracle_trial)
    })
    .into_iter()
    .collect::<Result<_, _>>()?;

    let text = if args.trials == 1 {
        serde_json::to_string_pretty(&reports[0])
    } else {
        let equal = reports.iter().filter(|r| r.equal).count();
        serde_json::to_string_pretty(&OracleSummary {
            graph: GraphStats::of(&args.graph, &g),
            k: args.k,
            field: args.field,
            equal_fraction: equal as f64 / reports.len() as f64,
            hindsight_never_later: reports.iter().all(hindsight_not_later),
            trials: reports,
        })
    }
    .expect("serializable")
        + "\n";
    write_output(&args.out, stdout, &text)?;
    Ok(EXIT_OK)
}

/// hindsight <= gossip, where a run that never completes counts as infinite.
pub fn hindsight_not_later(r: &OracleReport) -> bool {
    match (r.hindsight_rounds, r.gossip_rounds) {
        (Some(h), Some(g)) => h <= g,
        (_, None) => true,
        (None, Some(_)) => false,
    }
}

/// Runs a parsed command, printing errors to stderr; returns the exit code.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::GenGraph(a) => cmd_gen_graph(a, stdout),
        Command::Run(a) => cmd_run(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout),
        Command::Oracle(a) => cmd_oracle(a, stdout),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    })
}
