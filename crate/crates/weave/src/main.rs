//! `weave` operator CLI. Exit codes: 0 success, 1 validation error, 2 engine error.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use weave::bench::{bench_latency, BenchOptions};
use weave::engine::{Engine, EngineOptions, SystemClock};
use weave::remote::{RemoteConfig, RemoteOracle};
use weave::workload::{generate, to_jsonl, WorkloadSpec};
use weave::{Error, ErrorClass, Settings};
use weave_core::oracle::{MockOracle, SemanticOracle};
use weave_core::query::{GraphExpand, QuerySpec, TimeWindow};
use weave_core::temporal::TemporalField;
use weave_core::{SituationalImprint, StrandType};

#[derive(Parser, Debug)]
#[command(name = "weave", version, about = "Insight-particle memory engine")]
struct Cli {
    /// Engine configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Data directory; overrides the config file. Defaults to ./weave-data.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ingest one raw text per non-empty line.
    IngestFile(IngestFileArgs),
    /// Run a hybrid recall query and print the result as JSON.
    Query(QueryArgs),
    /// Run one refinement cycle and print its report.
    Refine,
    /// Print engine statistics.
    Stats,
    /// Check cross-layer integrity.
    Audit,
    /// Write a snapshot and empty the log.
    Checkpoint,
    /// Generate a deterministic synthetic corpus (JSON Lines).
    GenWorkload(GenArgs),
    /// Run the query-latency sweep.
    Bench(BenchArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct IngestFileArgs {
    path: PathBuf,
    #[arg(long, default_value = "cli")]
    source: String,
    #[arg(long)]
    user_tag: Option<String>,
    #[arg(long)]
    task_tag: Option<String>,
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[arg(long)]
    text: Option<String>,
    /// Temporal field for the window (t_create, t_modify, t_access, t_event_start, t_event_end).
    #[arg(long, default_value = "t_create")]
    field: String,
    #[arg(long, requires = "hi")]
    lo: Option<i64>,
    #[arg(long, requires = "lo")]
    hi: Option<i64>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Expand hits along outgoing strands up to this depth.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    type_filter: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    min_strength: f64,
    #[arg(long, default_value_t = 0.0)]
    min_importance: f64,
    /// Exact vector scan instead of ANN.
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    user_tag: Option<String>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    vocab: usize,
    #[arg(long, default_value_t = 0.3)]
    cluster_fraction: f64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![1_000usize, 10_000, 100_000])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    queries: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    exact: bool,
    /// Write the JSON report here as well as to stdout.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    listen: Option<String>,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.class() == ErrorClass::Validation { 1 } else { 2 };
        Self { code, message: e.to_string() }
    }
}

impl From<weave_core::Error> for Failure {
    fn from(e: weave_core::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: 2, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_settings(cli: &Cli) -> Result<Settings, Failure> {
    let mut s = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    if let Some(dir) = &cli.data_dir {
        s.data_dir = Some(dir.clone());
    }
    if s.data_dir.is_none() {
        s.data_dir = Some(PathBuf::from("weave-data"));
    }
    Ok(s)
}

fn oracle_for(settings: &Settings) -> Result<Arc<dyn SemanticOracle>, Failure> {
    match RemoteConfig::from_env().map_err(Failure::validation)? {
        Some(cfg) => Ok(Arc::new(RemoteOracle::new(cfg))),
        None => {
            let c = &settings.engine;
            Ok(Arc::new(MockOracle::new(c.dimension, c.oracle.max_core_data_chars, c.cluster.min_cluster_size)))
        }
    }
}

fn open_engine(settings: &Settings) -> Result<Engine, Failure> {
    let oracle = oracle_for(settings)?;
    Ok(Engine::open(EngineOptions::from(settings), oracle, Arc::new(SystemClock))?)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure { code: 2, message: e.to_string() })?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::GenWorkload(a) => gen_workload(a),
        Command::Bench(a) => {
            let settings = match &cli.config {
                Some(p) => Settings::load(p)?,
                None => Settings::default(),
            };
            bench(a, &settings)
        }
        Command::IngestFile(a) => {
            let engine = open_engine(&load_settings(&cli)?)?;
            ingest_file(&engine, a)
        }
        Command::Query(a) => {
            let spec = query_spec(a)?;
            let engine = open_engine(&load_settings(&cli)?)?;
            print_json(&engine.query(&spec)?)
        }
        Command::Refine => {
            let engine = open_engine(&load_settings(&cli)?)?;
            print_json(&engine.refine()?)
        }
        Command::Stats => print_json(&open_engine(&load_settings(&cli)?)?.stats()),
        Command::Audit => {
            let violations = open_engine(&load_settings(&cli)?)?.audit();
            for v in &violations {
                println!("{}: {}", v.check, v.detail);
            }
            println!("{} violations", violations.len());
            if violations.is_empty() {
                Ok(())
            } else {
                Err(Failure { code: 2, message: "integrity check failed".into() })
            }
        }
        Command::Checkpoint => {
            open_engine(&load_settings(&cli)?)?.checkpoint()?;
            Ok(())
        }
        Command::Serve(a) => {
            let settings = load_settings(&cli)?;
            serve(&settings, a)
        }
    }
}

fn ingest_file(engine: &Engine, a: &IngestFileArgs) -> Result<(), Failure> {
    let file = std::fs::File::open(&a.path).map_err(|e| Failure::validation(format!("{}: {e}", a.path.display())))?;
    let mut imprint = SituationalImprint::from_source(a.source.clone());
    imprint.user_tag = a.user_tag.clone();
    imprint.task_tag = a.task_tag.clone();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut count = 0usize;
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let id = engine.ingest(&line, imprint.clone())?;
        writeln!(out, "{id}")?;
        count += 1;
    }
    eprintln!("ingested {count} particles");
    Ok(())
}

fn query_spec(a: &QueryArgs) -> Result<QuerySpec, Failure> {
    let time_window = match (a.lo, a.hi) {
        (Some(lo), Some(hi)) => {
            let field =
                TemporalField::parse(&a.field).ok_or_else(|| Failure::validation(format!("unknown field {:?}", a.field)))?;
            Some(TimeWindow { field, lo, hi })
        }
        _ => None,
    };
    let type_filter = match &a.type_filter {
        Some(t) => Some(StrandType::parse(t).ok_or_else(|| Failure::validation(format!("unknown strand type {t:?}")))?),
        None => None,
    };
    let spec = QuerySpec {
        text: a.text.clone(),
        time_window,
        k: a.k,
        graph_expand: a.depth.map(|max_depth| GraphExpand { max_depth, type_filter, min_strength: a.min_strength }),
        min_importance: a.min_importance,
        use_ann: !a.exact,
        user_tag: a.user_tag.clone(),
    };
    spec.check()?;
    Ok(spec)
}

fn gen_workload(a: &GenArgs) -> Result<(), Failure> {
    let spec = WorkloadSpec { n_particles: a.n, seed: a.seed, vocab_size: a.vocab, cluster_fraction: a.cluster_fraction, ..WorkloadSpec::default() };
    spec.check().map_err(Failure::validation)?;
    let text = to_jsonl(&generate(&spec));
    match &a.out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn bench(a: &BenchArgs, settings: &Settings) -> Result<(), Failure> {
    let opts = BenchOptions {
        sizes: a.sizes.clone(),
        queries_per_size: a.queries,
        workload: WorkloadSpec { seed: a.seed, ..WorkloadSpec::default() },
        seed: a.seed.wrapping_add(4),
        use_ann: !a.exact,
        ..BenchOptions::default()
    };
    let report = bench_latency(&opts, &settings.engine).map_err(Failure::validation)?;
    if let Some(path) = &a.json {
        let text = serde_json::to_string_pretty(&report).map_err(|e| Failure { code: 2, message: e.to_string() })?;
        std::fs::write(path, text)?;
    }
    if let Some(path) = &a.csv {
        let text = report.to_csv().map_err(|e| Failure { code: 2, message: e.to_string() })?;
        std::fs::write(path, text)?;
    }
    print_json(&report)?;
    if report.failures.is_empty() {
        Ok(())
    } else {
        Err(Failure { code: 2, message: format!("{} sizes failed", report.failures.len()) })
    }
}

fn serve(settings: &Settings, a: &ServeArgs) -> Result<(), Failure> {
    let engine = Arc::new(open_engine(settings)?);
    let listen = a.listen.clone().unwrap_or_else(|| settings.listen.clone());
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&listen).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        if settings.refine_poll_ms > 0 {
            weave::service::spawn_scheduler(engine.clone(), std::time::Duration::from_millis(settings.refine_poll_ms));
        }
        weave::service::serve(listener, engine, settings.api_token.clone()).await
    })?;
    Ok(())
}
