//! Command-line frontend: offline analysis of captured files, scenario
//! generation, MTTR projections and the ingest service.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use faultline_core::classify::describe_rules;
use faultline_core::config::Config;
use faultline_core::ingest::{parse_browser_events, parse_har, parse_iso8601_ms, parse_server_log, ParseReport};
use faultline_core::metrics::{project_reduction, render_projection, MttrModel};
use faultline_core::model::{CorrelationId, FailureReport, Severity, TelemetryEvent};
use faultline_core::scenario::{generate, ScenarioName};
use faultline_core::{load_spec, ApiSpec, Engine, EventStore, FailureContextObject};

mod report;

pub use report::render_report;

/// Exit status for usage and input errors. Success is 0; nothing else is used.
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "faultline", version, about = "Multi-source failure diagnosis", arg_required_else_help = true)]
pub struct Cli {
    /// Print the ordered classification rules and exit.
    #[arg(long, global = true)]
    pub explain_rules: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Correlate captured files around a failure and print the diagnosis.
    Analyze(AnalyzeArgs),
    /// Write a synthetic failure scenario with its ground-truth manifest.
    Simulate(SimulateArgs),
    /// Run the ingest and report service.
    Serve(ServeArgs),
    /// MTTR arithmetic.
    #[command(subcommand)]
    Metrics(MetricsCommand),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, value_name = "FILE")]
    pub har: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub server_logs: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub browser_events: Option<PathBuf>,
    /// OpenAPI document (JSON or YAML).
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
    /// Epoch milliseconds or RFC 3339 timestamp.
    #[arg(long, value_name = "T")]
    pub failure_time: Option<String>,
    #[arg(long, value_name = "ID")]
    pub cid: Option<String>,
    /// Status that triggered the report; makes it an automatic report.
    #[arg(long, value_name = "CODE")]
    pub status: Option<u16>,
    /// Half-width of the correlation window in ms.
    #[arg(long, value_name = "MS")]
    pub window: Option<i64>,
    #[arg(long, value_name = "MS")]
    pub skew: Option<i64>,
    #[arg(long, value_name = "N")]
    pub max_events: Option<usize>,
    /// Also write the FCO JSON to this file.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: ScenarioName,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u32>,
    #[arg(long, value_name = "FILE")]
    pub store: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum MetricsCommand {
    /// Project the MTTR after shortening diagnosis.
    Project(ProjectArgs),
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Detection time in minutes.
    #[arg(long)]
    pub detect: f64,
    #[arg(long)]
    pub diagnose: f64,
    #[arg(long)]
    pub fix: f64,
    /// Share of total MTTR spent diagnosing; overrides --diagnose for the projection.
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub reduction: f64,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if cli.explain_rules {
        print!("{}", describe_rules());
        return 0;
    }
    let result = match cli.command {
        Some(Command::Analyze(a)) => analyze(&a).map(|out| print!("{out}")),
        Some(Command::Simulate(a)) => simulate(&a),
        Some(Command::Serve(a)) => serve(a),
        Some(Command::Metrics(MetricsCommand::Project(a))) => metrics_project(&a).map(|out| print!("{out}")),
        None => Err(input("no command given")),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })
}

fn load_config(path: Option<&Path>) -> Result<Config, CliError> {
    match path {
        Some(p) => Config::load(p).map_err(|e| input(e.to_string())),
        None => Ok(Config::default()),
    }
}

fn load_spec_file(path: &Path) -> Result<ApiSpec, CliError> {
    let loaded = load_spec(&read(path)?).map_err(|e| input(format!("{}: {e}", path.display())))?;
    for w in &loaded.warnings {
        tracing::warn!(spec = %path.display(), "{w}");
    }
    Ok(loaded.spec)
}

fn parse_time(raw: &str) -> Result<i64, CliError> {
    raw.trim()
        .parse::<i64>()
        .ok()
        .or_else(|| parse_iso8601_ms(raw))
        .filter(|t| *t >= 0)
        .ok_or_else(|| input(format!("--failure-time `{raw}` is neither epoch ms nor an RFC 3339 timestamp")))
}

fn note_rejections(what: &str, report: &ParseReport) {
    for r in &report.rejections {
        eprintln!("warning: {what} entry {} skipped: {}", r.index, r.reason);
    }
}

/// Ingests the supplied capture files in a fixed order (HAR, server log, browser).
pub fn load_events(args: &AnalyzeArgs, config: &Config) -> Result<Vec<TelemetryEvent>, CliError> {
    let mut events = Vec::new();
    if let Some(path) = &args.har {
        let doc: serde_json::Value =
            serde_json::from_str(&read(path)?).map_err(|e| input(format!("{}: not JSON: {e}", path.display())))?;
        let (evs, report) =
            parse_har(&doc, None, &config.ingest).map_err(|e| input(format!("{}: {e}", path.display())))?;
        note_rejections("HAR", &report);
        events.extend(evs);
    }
    if let Some(path) = &args.server_logs {
        let (evs, report) = parse_server_log(&read(path)?);
        note_rejections("server log", &report);
        if evs.is_empty() && report.rejected > 0 {
            return Err(input(format!("{}: no parseable log lines", path.display())));
        }
        events.extend(evs);
    }
    if let Some(path) = &args.browser_events {
        let (evs, report) = parse_browser_events(&read(path)?);
        note_rejections("browser event", &report);
        if evs.is_empty() && report.rejected > 0 {
            return Err(input(format!("{}: no parseable browser events", path.display())));
        }
        events.extend(evs);
    }
    Ok(events)
}

/// Failure time for a cid-only analysis: the earliest error-or-worse event
/// carrying the id, else the earliest event carrying it.
pub fn infer_failure_time(events: &[TelemetryEvent], cid: &CorrelationId) -> Option<i64> {
    let tagged = || events.iter().filter(|e| e.correlation_id.as_ref() == Some(cid));
    tagged()
        .filter(|e| e.severity >= Severity::Error)
        .map(|e| e.timestamp_ms)
        .min()
        .or_else(|| tagged().map(|e| e.timestamp_ms).min())
}

/// Runs the full pipeline over the capture files.
pub fn analyze_fco(args: &AnalyzeArgs) -> Result<FailureContextObject, CliError> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(w) = args.window {
        config.correlation.window_ms = w;
    }
    if let Some(s) = args.skew {
        config.correlation.skew_ms = s;
    }
    if let Some(n) = args.max_events {
        config.correlation.max_events = n;
    }
    config.correlation.validate().map_err(|e| input(e.to_string()))?;

    if args.failure_time.is_none() && args.cid.is_none() {
        return Err(input("either --failure-time or --cid is required"));
    }
    if args.har.is_none() && args.server_logs.is_none() && args.browser_events.is_none() {
        return Err(input("no input files given (--har, --server-logs, --browser-events)"));
    }
    let cid = args
        .cid
        .as_deref()
        .map(CorrelationId::new)
        .transpose()
        .map_err(|e| input(format!("--cid: {e}")))?;

    let spec_path = args.spec.clone().or_else(|| config.service.spec.clone());
    let spec = spec_path.as_deref().map(load_spec_file).transpose()?;
    let engine = Engine::from_config(&config, spec).map_err(|e| input(e.to_string()))?;

    let events = load_events(args, &config)?;
    let failure_time = match (&args.failure_time, &cid) {
        (Some(raw), _) => parse_time(raw)?,
        (None, Some(c)) => infer_failure_time(&events, c)
            .ok_or_else(|| input(format!("no events carry correlation id `{c}`; pass --failure-time")))?,
        (None, None) => unreachable!("checked above"),
    };

    let store = EventStore::in_memory();
    store.append_batch(events).map_err(|e| input(e.to_string()))?;
    let report = match args.status {
        Some(status) => FailureReport::auto_status(failure_time, status, cid),
        None => FailureReport::manual(failure_time, cid),
    };
    engine.run(&store, report).map_err(|e| input(e.to_string()))
}

/// `analyze`: returns the text for stdout (FCO JSON unless `--out` is given,
/// followed by the human-readable report).
pub fn analyze(args: &AnalyzeArgs) -> Result<String, CliError> {
    let fco = analyze_fco(args)?;
    let json = fco.to_pretty_json();
    let mut out = String::new();
    match &args.out {
        Some(path) => std::fs::write(path, format!("{json}\n"))
            .map_err(|source| CliError::Write { path: path.clone(), source })?,
        None => {
            out.push_str(&json);
            out.push_str("\n\n");
        }
    }
    out.push_str(&render_report(&fco));
    Ok(out)
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let scenario = generate(args.scenario, args.seed);
    scenario
        .write_to_dir(&args.out_dir)
        .map_err(|source| CliError::Write { path: args.out_dir.clone(), source })?;
    println!(
        "wrote {} (seed {}, expected {}) to {}",
        args.scenario,
        args.seed,
        scenario.expected_class(),
        args.out_dir.display()
    );
    Ok(())
}

/// Builds the effective service configuration: file, then flag overrides,
/// then validation. Nothing is bound here.
pub fn serve_config(args: &ServeArgs) -> Result<Config, CliError> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(p) = args.port {
        config.service.port = p;
    }
    if let Some(s) = &args.store {
        config.service.store = Some(s.clone());
    }
    if let Some(s) = &args.spec {
        config.service.spec = Some(s.clone());
    }
    config.service.validate().map_err(|e| input(e.to_string()))?;
    if let Some(spec) = &config.service.spec {
        load_spec_file(spec)?;
    }
    Ok(config)
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let config = serve_config(&args)?;
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| input(format!("cannot start runtime: {e}")))?;
    rt.block_on(faultline_service::serve(config)).map_err(|e| input(e.to_string()))
}

pub fn metrics_project(args: &ProjectArgs) -> Result<String, CliError> {
    let model = MttrModel::new(args.detect, args.diagnose, args.fix).map_err(|e| input(e.to_string()))?;
    let p = project_reduction(&model, args.fraction, args.reduction).map_err(|e| input(e.to_string()))?;
    Ok(render_projection(&p))
}
