//! Command-line front end: `run` streams a query over a source, `bench`
//! runs the memoization experiments.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{self, BenchError, Experiment, ScenarioError, ScenarioSpec};
use crate::engine::{BudgetMode, Engine, EngineConfig, QueryBudget, RunError, Runner, WindowResult};
use crate::incremental::{Aggregate, QueryDef};
use crate::stream::{open_source, SourceError, WindowSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<SourceError> for CliError {
    fn from(e: SourceError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Engine(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn io_err(what: &str, path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{what} {}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "incapprox", version, about = "Approximate incremental sliding-window aggregation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a windowed query over a JSON-lines stream.
    Run(RunArgs),
    /// Run memoization experiments from a scenario file.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Input: a file path, `-` for stdin, or host:port.
    pub source: String,
    /// sum, count or mean.
    #[arg(long, env = "INCAPPROX_QUERY", default_value = "sum")]
    pub query: String,
    /// Aggregate per item key.
    #[arg(long, env = "INCAPPROX_GROUP_BY")]
    pub group_by: bool,
    /// Window length in time units.
    #[arg(long, env = "INCAPPROX_WINDOW")]
    pub window: u64,
    #[arg(long, env = "INCAPPROX_SLIDE")]
    pub slide: u64,
    /// First window start; defaults to the first timestamp seen.
    #[arg(long, env = "INCAPPROX_START")]
    pub start: Option<u64>,
    /// fraction:<f>, items:<n> or latency:<ms>.
    #[arg(long, env = "INCAPPROX_BUDGET", default_value = "fraction:0.1")]
    pub budget: String,
    #[arg(long, env = "INCAPPROX_CONFIDENCE", default_value_t = 0.95)]
    pub confidence: f64,
    #[arg(long, env = "INCAPPROX_SEED")]
    pub seed: Option<u64>,
    /// Items between reservoir reallocations (default: the sample size).
    #[arg(long, env = "INCAPPROX_REALLOC_EVERY")]
    pub realloc_every: Option<usize>,
    #[arg(long, short, env = "INCAPPROX_OUTPUT")]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, env = "INCAPPROX_FORMAT", default_value = "csv")]
    pub format: Format,
    /// TOML file with `budget` (and optional `confidence`), re-read between
    /// windows when it changes.
    #[arg(long, env = "INCAPPROX_BUDGET_FILE")]
    pub budget_file: Option<PathBuf>,
    /// Write the final memo as JSON lines.
    #[arg(long, env = "INCAPPROX_MEMO_SNAPSHOT")]
    pub memo_snapshot: Option<PathBuf>,
    #[arg(long, env = "INCAPPROX_BATCH_SIZE", default_value_t = 1024)]
    pub batch_size: usize,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    pub scenario: PathBuf,
    /// Experiment name, or `all`.
    #[arg(long, short, env = "INCAPPROX_EXPERIMENT", default_value = "all")]
    pub experiment: String,
    #[arg(long, env = "INCAPPROX_OUTPUT_DIR", default_value = ".")]
    pub output_dir: PathBuf,
}

/// Validated settings for one `run`.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub source: String,
    pub query: QueryDef,
    pub window: WindowSpec,
    pub auto_start: bool,
    pub budget: QueryBudget,
    pub seed: u64,
    pub seed_was_random: bool,
    pub realloc_every: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub budget_file: Option<PathBuf>,
    pub memo_snapshot: Option<PathBuf>,
    pub batch_size: usize,
}

impl TryFrom<&RunArgs> for RunConfig {
    type Error = CliError;

    fn try_from(a: &RunArgs) -> Result<Self, Self::Error> {
        let aggregate: Aggregate = a.query.parse().map_err(|e: crate::incremental::QueryError| CliError::Config(e.to_string()))?;
        let window = WindowSpec::new(a.start.unwrap_or(0), a.window, a.slide)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let mode: BudgetMode = a.budget.parse().map_err(CliError::Config)?;
        let budget = QueryBudget::new(mode, a.confidence).map_err(CliError::Config)?;
        if a.realloc_every == Some(0) {
            return Err(CliError::Config("--realloc-every must be positive".into()));
        }
        if a.batch_size == 0 {
            return Err(CliError::Config("--batch-size must be positive".into()));
        }
        let (seed, seed_was_random) = match a.seed {
            Some(s) => (s, false),
            None => (rand::random(), true),
        };
        Ok(RunConfig {
            source: a.source.clone(),
            query: QueryDef::new(aggregate, a.group_by),
            window,
            auto_start: a.start.is_none(),
            budget,
            seed,
            seed_was_random,
            realloc_every: a.realloc_every,
            output: a.output.clone(),
            format: a.format,
            budget_file: a.budget_file.clone(),
            memo_snapshot: a.memo_snapshot.clone(),
            batch_size: a.batch_size,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BudgetFile {
    budget: String,
    confidence: Option<f64>,
}

/// Re-reads the budget file when its modification time changes.
struct BudgetWatch {
    path: PathBuf,
    seen: Option<SystemTime>,
}

impl BudgetWatch {
    fn poll(&mut self, current: &QueryBudget) -> Option<QueryBudget> {
        let modified = fs::metadata(&self.path).and_then(|m| m.modified()).ok()?;
        if self.seen == Some(modified) {
            return None;
        }
        self.seen = Some(modified);
        match load_budget(&self.path, current) {
            Ok(b) => Some(b),
            Err(e) => {
                log::warn!("ignoring budget file: {e}");
                None
            }
        }
    }
}

fn load_budget(path: &Path, current: &QueryBudget) -> Result<QueryBudget, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err("cannot read", path, e))?;
    let f: BudgetFile = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    let mode: BudgetMode = f.budget.parse().map_err(CliError::Config)?;
    QueryBudget::new(mode, f.confidence.unwrap_or(current.confidence)).map_err(CliError::Config)
}

/// Output target that can be made durable at window boundaries.
enum Sink {
    File(BufWriter<File>),
    Stdout(io::Stdout),
}

impl Write for Sink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Sink::File(f) => f.write(buf),
            Sink::Stdout(s) => s.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Sink::File(f) => f.flush(),
            Sink::Stdout(s) => s.flush(),
        }
    }
}

impl Sink {
    /// Caller flushes first.
    fn sync(&self) -> io::Result<()> {
        match self {
            Sink::File(f) => f.get_ref().sync_data(),
            Sink::Stdout(_) => Ok(()),
        }
    }
}

#[derive(Serialize)]
struct JsonEstimate<'a> {
    key: Option<&'a str>,
    estimate: f64,
    error_bound: Option<f64>,
    dof: i64,
}

#[derive(Serialize)]
struct JsonWindow<'a> {
    window: u64,
    start: u64,
    end: u64,
    window_items: usize,
    sample_size: usize,
    confidence: f64,
    reuse_fraction: f64,
    late_items: u64,
    estimates: Vec<JsonEstimate<'a>>,
}

enum Writer {
    Csv(Box<csv::Writer<Sink>>),
    Jsonl(Sink),
}

impl Writer {
    fn new(format: Format, sink: Sink, group_by: bool) -> Result<Self, csv::Error> {
        Ok(match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(sink);
                let mut header = vec!["window"];
                if group_by {
                    header.push("key");
                }
                header.extend(["estimate", "error_bound", "confidence", "sample_size", "reuse_fraction"]);
                w.write_record(&header)?;
                Writer::Csv(Box::new(w))
            }
            Format::Jsonl => Writer::Jsonl(sink),
        })
    }

    fn window(&mut self, r: &WindowResult<f64>, group_by: bool, confidence: f64) -> Result<(), CliError> {
        let fail = |e: &dyn std::fmt::Display| CliError::Io(format!("cannot write output: {e}"));
        match self {
            Writer::Csv(w) => {
                let common = |est: Option<(f64, Option<f64>)>| {
                    let (value, bound) = match est {
                        Some((v, b)) => (v.to_string(), b.map(|b| b.to_string()).unwrap_or_default()),
                        None => (String::new(), String::new()),
                    };
                    [
                        value,
                        bound,
                        confidence.to_string(),
                        r.sample_size.to_string(),
                        r.reuse.overall_fraction.to_string(),
                    ]
                };
                if r.estimates.is_empty() && !group_by {
                    let mut rec = vec![r.window_index.to_string()];
                    rec.extend(common(None));
                    w.write_record(&rec).map_err(|e| fail(&e))?;
                }
                for g in &r.estimates {
                    let mut rec = vec![r.window_index.to_string()];
                    if group_by {
                        rec.push(g.key.as_deref().unwrap_or("").to_string());
                    }
                    rec.extend(common(Some((g.estimate.value, g.estimate.error_bound))));
                    w.write_record(&rec).map_err(|e| fail(&e))?;
                }
                w.flush().map_err(|e| fail(&e))?;
                w.get_ref().sync().map_err(|e| fail(&e))
            }
            Writer::Jsonl(sink) => {
                let rec = JsonWindow {
                    window: r.window_index,
                    start: r.start,
                    end: r.end,
                    window_items: r.window_items,
                    sample_size: r.sample_size,
                    confidence,
                    reuse_fraction: r.reuse.overall_fraction,
                    late_items: r.late_items,
                    estimates: r
                        .estimates
                        .iter()
                        .map(|g| JsonEstimate {
                            key: g.key.as_deref(),
                            estimate: g.estimate.value,
                            error_bound: g.estimate.error_bound,
                            dof: g.estimate.dof,
                        })
                        .collect(),
                };
                serde_json::to_writer(&mut *sink, &rec).map_err(|e| fail(&e))?;
                sink.write_all(b"\n").map_err(|e| fail(&e))?;
                sink.flush().map_err(|e| fail(&e))?;
                sink.sync().map_err(|e| fail(&e))
            }
        }
    }
}

/// Runs `config` to the end of its stream; returns the number of windows.
pub fn run(config: &RunConfig) -> Result<u64, CliError> {
    let source = open_source::<f64>(&config.source, config.batch_size)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", config.source)))?;
    let sink = match &config.output {
        Some(path) => {
            let f = OpenOptions::new()
                .create(true)
                .write(true)
                .truncate(true)
                .open(path)
                .map_err(|e| io_err("cannot create", path, e))?;
            Sink::File(BufWriter::new(f))
        }
        None => Sink::Stdout(io::stdout()),
    };
    let mut writer = Writer::new(config.format, sink, config.query.group_by)
        .map_err(|e| CliError::Io(format!("cannot write output: {e}")))?;

    let engine = Engine::new(EngineConfig {
        window: config.window,
        query: config.query,
        budget: config.budget,
        seed: config.seed,
        realloc_every: config.realloc_every,
    });
    let mut runner = Runner::new(engine, source, config.auto_start);
    let mut watch = config.budget_file.as_ref().map(|p| BudgetWatch {
        path: p.clone(),
        seen: None,
    });

    let mut windows = 0;
    loop {
        if let Some(w) = watch.as_mut() {
            let current = runner.engine().config().budget;
            if let Some(b) = w.poll(&current) {
                if b != current {
                    log::info!("budget now {} at confidence {}", b.mode, b.confidence);
                }
                runner.engine_mut().set_budget(b);
            }
        }
        let Some(result) = runner.next_window()? else {
            break;
        };
        log::debug!(
            "window {} [{}, {}): {} items, sample {}, reuse {:.4}",
            result.window_index,
            result.start,
            result.end,
            result.window_items,
            result.sample_size,
            result.reuse.overall_fraction
        );
        let confidence = runner.engine().config().budget.confidence;
        writer.window(&result, config.query.group_by, confidence)?;
        windows += 1;
    }

    if let Some(path) = &config.memo_snapshot {
        let f = File::create(path).map_err(|e| io_err("cannot create", path, e))?;
        let mut w = BufWriter::new(f);
        runner
            .engine()
            .memo()
            .write_snapshot(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| io_err("cannot write", path, e))?;
    }
    Ok(windows)
}

/// Runs a query and reports errors on stderr; returns the exit code.
pub fn cmd_run(config: &RunConfig) -> i32 {
    if config.seed_was_random {
        eprintln!("seed: {}", config.seed);
    }
    match run(config) {
        Ok(n) => {
            log::info!("{n} windows");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs experiments, writing `<output_dir>/<experiment>.csv` for each.
pub fn bench(scenario: &Path, experiment: &str, output_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let experiments: Vec<Experiment> = if experiment == "all" {
        Experiment::ALL.to_vec()
    } else {
        vec![experiment.parse()?]
    };
    let spec = ScenarioSpec::load(scenario)?;
    fs::create_dir_all(output_dir).map_err(|e| io_err("cannot create", output_dir, e))?;
    let mut written = Vec::new();
    for e in experiments {
        let rows = match bench::run_experiment(e, &spec) {
            Err(BenchError::MissingGrid(_)) if experiment == "all" => {
                log::info!("scenario has no {e} grid, skipping");
                continue;
            }
            other => other?,
        };
        let path = output_dir.join(format!("{e}.csv"));
        let f = File::create(&path).map_err(|err| io_err("cannot create", &path, err))?;
        bench::write_csv(&rows, BufWriter::new(f)).map_err(|err| io_err("cannot write", &path, err))?;
        print!("{}", bench::summary(&rows));
        written.push(path);
    }
    Ok(written)
}

pub fn cmd_bench(scenario: &Path, experiment: &str, output_dir: &Path) -> i32 {
    match bench(scenario, experiment, output_dir) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Entry point behind the binary.
pub fn main_with(cli: Cli) -> i32 {
    match cli.command {
        Command::Run(args) => match RunConfig::try_from(&args) {
            Ok(config) => cmd_run(&config),
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Command::Bench(b) => cmd_bench(&b.scenario, &b.experiment, &b.output_dir),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(extra: &[&str]) -> RunArgs {
        let mut argv = vec!["incapprox", "run", "--window", "10", "--slide", "5", "--seed", "1", "in.jsonl"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Run(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn defaults() {
        let c = RunConfig::try_from(&args(&[])).unwrap();
        assert_eq!(c.query, QueryDef::new(Aggregate::Sum, false));
        assert_eq!(c.budget, QueryBudget::fraction(0.1));
        assert!(c.auto_start);
        assert_eq!(c.format, Format::Csv);
    }

    #[test]
    fn config_errors_exit_two() {
        for bad in [
            &["--query", "min"][..],
            &["--query", "median"],
            &["--budget", "fraction:2"],
            &["--confidence", "1.5"],
            &["--realloc-every", "0"],
        ] {
            let e = RunConfig::try_from(&args(bad)).unwrap_err();
            assert_eq!(e.exit_code(), EXIT_CONFIG, "{bad:?}");
        }
        let e = RunConfig::try_from(&args(&["--query", "max"])).unwrap_err();
        assert!(e.to_string().starts_with("unsupported: requires extreme value theory"));
        let mut a = args(&[]);
        a.slide = 20;
        assert_eq!(RunConfig::try_from(&a).unwrap_err().exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn random_seed_is_flagged() {
        let mut a = args(&[]);
        a.seed = None;
        assert!(RunConfig::try_from(&a).unwrap().seed_was_random);
    }

    #[test]
    fn budget_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("budget.toml");
        fs::write(&path, "budget = \"items:50\"\nconfidence = 0.9\n").unwrap();
        let b = load_budget(&path, &QueryBudget::fraction(0.1)).unwrap();
        assert_eq!(b.mode, BudgetMode::MaxItems(50));
        assert_eq!(b.confidence, 0.9);
        let mut w = BudgetWatch { path: path.clone(), seen: None };
        assert!(w.poll(&b).is_some());
        assert!(w.poll(&b).is_none());
        fs::write(&path, "budget = \"nonsense\"\n").unwrap();
        assert!(load_budget(&path, &b).is_err());
    }
}
