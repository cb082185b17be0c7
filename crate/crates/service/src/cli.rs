//! Headless command-line workflows sharing the service's code paths.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use queuelens_core::config::{ConfigDocument, ConfigError};
use queuelens_core::export::{render, retrieve_selected_records, table_document, ExportFormat};
use queuelens_core::ingest::{ingest_path, IngestError, IngestOptions, IngestReport, InputFormat};
use queuelens_core::model::Schema;
use queuelens_core::selection::{update_state, Range};
use queuelens_core::stats::queue_summaries;
use queuelens_core::synth::{generate_synthetic, SynthError, SynthScenario};
use queuelens_core::time::parse_timestamp;
use queuelens_core::views::{facet_groups, facet_views};
use queuelens_core::{resolve_config, EncodingConfig, JobTable, Mutation, SessionState};

use crate::service::{self, AppState, ServiceOptions};

#[derive(Debug, Parser)]
#[command(name = "queuelens", version, about = "Binned views, linked selection and export over HPC job traces")]
pub struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a trace and report accepted and rejected rows.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report format.
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic trace.
    Synth {
        /// Scenario document (key = value lines); defaults apply otherwise.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Trace format; inferred from the --out extension when omitted.
        #[arg(long, value_enum)]
        format: Option<DocFormat>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-queue record counts and wait-time quantiles.
    Summarize {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the faceted view bundles as JSON.
    Views {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        selection: SelectionArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the records selected by the filter and brush flags.
    Export {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        selection: SelectionArgs,
        /// Document format; inferred from the --out extension when omitted.
        #[arg(long, value_enum)]
        format: Option<DocFormat>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API over one table.
    Serve {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Seconds before an idle session expires.
        #[arg(long, default_value_t = service::DEFAULT_IDLE_TIMEOUT.as_secs())]
        idle_timeout: u64,
    },
}

/// Where the table comes from: a trace file, or a synthetic scenario.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Trace file (CSV or JSON).
    #[arg(long, conflicts_with = "scenario")]
    pub input: Option<PathBuf>,
    /// Trace format; inferred from the --input extension when omitted.
    #[arg(long, value_enum, requires = "input")]
    pub input_format: Option<DocFormat>,
    /// Synthetic scenario document to generate the table from.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Seed for the synthetic table (default scenario unless --scenario).
    #[arg(long, conflicts_with = "input")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SelectionArgs {
    /// Comma-separated categorical labels to pin.
    #[arg(long, value_delimiter = ',')]
    pub filter: Vec<String>,
    /// Brush range on the x field: "lo,hi" as numbers or ISO timestamps.
    #[arg(long, allow_hyphen_values = true)]
    pub x_range: Option<String>,
    /// Brush range on the y field: "lo,hi".
    #[arg(long, allow_hyphen_values = true)]
    pub y_range: Option<String>,
    /// Facet to brush; every facet when omitted.
    #[arg(long)]
    pub facet: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DocFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

impl DocFormat {
    fn from_path(path: Option<&Path>) -> DocFormat {
        match path.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => DocFormat::Json,
            _ => DocFormat::Csv,
        }
    }

    fn export(self) -> ExportFormat {
        match self {
            DocFormat::Csv => ExportFormat::Csv,
            DocFormat::Json => ExportFormat::Json,
        }
    }
}

/// Failure classes, each with its own exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data: {0}")]
    Data(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(format!("config: {e}"))
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::UnreadableSource { .. } => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InfeasibleScenario(_) => CliError::Data(e.to_string()),
            _ => CliError::Usage(format!("scenario: {e}")),
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

/// Resolves `--config`: key = value text, or a JSON object for `.json` files.
pub fn load_config(path: Option<&Path>) -> Result<EncodingConfig, CliError> {
    let doc = match path {
        None => ConfigDocument::default(),
        Some(p) if DocFormat::from_path(Some(p)) == DocFormat::Json => {
            let value: serde_json::Value = serde_json::from_str(&read_text(p)?)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?;
            ConfigDocument::from_json(&value)?
        }
        Some(p) => ConfigDocument::parse_text(&read_text(p)?)?,
    };
    Ok(resolve_config(&doc, &Schema::jobs())?)
}

fn load_scenario(path: Option<&Path>, seed: Option<u64>) -> Result<SynthScenario, CliError> {
    let mut scenario = match path {
        Some(p) => SynthScenario::parse(&read_text(p)?)?,
        None => SynthScenario::default(),
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

pub struct LoadedTable {
    pub table: JobTable,
    pub table_id: String,
    pub report: Option<IngestReport>,
}

/// Ingests `--input` or generates the synthetic table.
pub fn load_table(data: &DataArgs, config: &EncodingConfig) -> Result<LoadedTable, CliError> {
    if let Some(input) = &data.input {
        let format = data.input_format.unwrap_or_else(|| DocFormat::from_path(Some(input)));
        let options = IngestOptions {
            format: match format {
                DocFormat::Csv => InputFormat::Csv,
                DocFormat::Json => InputFormat::Json,
            },
            timezone: config.timezone,
            ..IngestOptions::default()
        };
        let (table, report) = ingest_path(input, &options)?;
        let table_id = input.file_name().map_or_else(|| input.display().to_string(), |n| n.to_string_lossy().into_owned());
        return Ok(LoadedTable { table, table_id, report: Some(report) });
    }
    if data.scenario.is_none() && data.seed.is_none() {
        return Err(CliError::Usage("give --input, --scenario or --seed".into()));
    }
    let scenario = load_scenario(data.scenario.as_deref(), data.seed)?;
    let table = generate_synthetic(&scenario)?;
    Ok(LoadedTable { table, table_id: format!("synthetic-seed-{}", scenario.seed), report: None })
}

fn parse_bound(s: &str) -> Option<f64> {
    let s = s.trim();
    s.parse::<f64>().ok().filter(|v| v.is_finite()).or_else(|| parse_timestamp(s).ok().map(|t| t as f64))
}

/// Parses "lo,hi" where each side is a number or an ISO timestamp.
pub fn parse_range(flag: &str, text: &str) -> Result<Range, CliError> {
    let bad = || CliError::Usage(format!("{flag} expects \"lo,hi\" (numbers or ISO timestamps), got {text:?}"));
    let (lo, hi) = text.split_once(',').ok_or_else(bad)?;
    let (lo, hi) = (parse_bound(lo).ok_or_else(bad)?, parse_bound(hi).ok_or_else(bad)?);
    Range::new(lo, hi).map_err(|e| CliError::Usage(format!("{flag}: {e}")))
}

/// The mutations a set of selection flags stands for: one pin per
/// `--filter` label, then a brush on `--facet` (or every facet). Without
/// range flags the brush spans the whole x extent, so the filters alone
/// decide the selection.
pub fn selection_mutations(table: &JobTable, config: &EncodingConfig, args: &SelectionArgs) -> Result<Vec<Mutation>, CliError> {
    let mut out: Vec<Mutation> = args.filter.iter().filter(|l| !l.is_empty()).map(|l| Mutation::Pin { label: l.clone() }).collect();
    let x_range = args.x_range.as_deref().map(|t| parse_range("--x-range", t)).transpose()?;
    let y_range = args.y_range.as_deref().map(|t| parse_range("--y-range", t)).transpose()?;
    let (x_range, y_range) = if x_range.is_none() && y_range.is_none() {
        let (lo, hi) = table
            .records()
            .iter()
            .filter_map(|r| r.numeric(config.x_field))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if lo > hi {
            return Ok(out);
        }
        (Some(Range { lo, hi }), None)
    } else {
        (x_range, y_range)
    };
    let facets: Vec<String> = match &args.facet {
        Some(f) => vec![f.clone()],
        None => facet_groups(table, config.facet_field).0.into_iter().map(|g| g.0).collect(),
    };
    out.extend(facets.into_iter().map(|facet| Mutation::SetBrush { facet, x_range, y_range }));
    Ok(out)
}

/// Session state after applying the selection flags to a fresh session.
pub fn apply_selection(table: &JobTable, config: &EncodingConfig, args: &SelectionArgs) -> Result<SessionState, CliError> {
    let mut state = SessionState::new(table, config.clone());
    for m in selection_mutations(table, config, args)? {
        state = update_state(table, &state, &m).map_err(|e| CliError::Data(e.to_string()))?;
    }
    Ok(state)
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Io(format!("cannot write to stdout: {e}"))),
    }
}

fn json_bytes(value: &impl serde::Serialize) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

fn ingest_text(report: &IngestReport) -> String {
    let mut s = format!(
        "source: {}\naccepted: {}\nrejected: {}\n",
        report.source, report.accepted_count, report.rejected_count
    );
    for r in &report.rejections {
        s.push_str(&format!("  line {}: {} ({})\n", r.line, r.rule, r.message));
    }
    for w in &report.warnings {
        s.push_str(&format!("  warning: {w}\n"));
    }
    s
}

fn summary_text(table: &JobTable) -> String {
    let mut s = format!(
        "{:<12} {:>8} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
        "queue", "jobs", "wait_p10", "wait_p25", "wait_p50", "wait_p75", "wait_p90", "wait_max"
    );
    for q in queue_summaries(table) {
        s.push_str(&format!(
            "{:<12} {:>8} {:>10.0} {:>10.0} {:>10.0} {:>10.0} {:>10.0} {:>10.0}\n",
            q.queue, q.count, q.wait_p10, q.wait_p25, q.wait_median, q.wait_p75, q.wait_p90, q.wait_max
        ));
    }
    s
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { data, config, format, out } => {
            if data.input.is_none() {
                return Err(CliError::Usage("ingest needs --input".into()));
            }
            let config = load_config(config.as_deref())?;
            let loaded = load_table(&data, &config)?;
            let report = loaded.report.expect("file input produces a report");
            let bytes = match format {
                ReportFormat::Text => ingest_text(&report).into_bytes(),
                ReportFormat::Json => json_bytes(&report),
            };
            write_output(out.as_deref(), &bytes)
        }
        Command::Synth { scenario, seed, format, out } => {
            let scenario = load_scenario(scenario.as_deref(), seed)?;
            let table = generate_synthetic(&scenario)?;
            let format = format.unwrap_or_else(|| DocFormat::from_path(Some(&out)));
            let doc = table_document(&table, &EncodingConfig::default().hash(), &format!("synthetic scenario, seed {}", scenario.seed));
            write_output(Some(&out), &render(&doc, format.export()))?;
            log::info!("wrote {} records to {}", table.len(), out.display());
            Ok(())
        }
        Command::Summarize { data, config, format, out } => {
            let config = load_config(config.as_deref())?;
            let table = load_table(&data, &config)?.table;
            let bytes = match format {
                ReportFormat::Text => summary_text(&table).into_bytes(),
                ReportFormat::Json => json_bytes(&queue_summaries(&table)),
            };
            write_output(out.as_deref(), &bytes)
        }
        Command::Views { data, config, selection, out } => {
            let config = load_config(config.as_deref())?;
            let table = load_table(&data, &config)?.table;
            let state = if selection.filter.is_empty() && selection.x_range.is_none() && selection.y_range.is_none() && selection.facet.is_none() {
                SessionState::new(&table, config.clone())
            } else {
                apply_selection(&table, &config, &selection)?
            };
            let views = facet_views(&table, state.config(), state.filter(), state.selection()).map_err(|e| CliError::Data(e.to_string()))?;
            write_output(out.as_deref(), &json_bytes(&views))
        }
        Command::Export { data, config, selection, format, out } => {
            let config = load_config(config.as_deref())?;
            let table = load_table(&data, &config)?.table;
            let state = apply_selection(&table, &config, &selection)?;
            let format = format.unwrap_or_else(|| DocFormat::from_path(out.as_deref()));
            let doc = retrieve_selected_records(&table, &state);
            write_output(out.as_deref(), &render(&doc, format.export()))?;
            log::info!("exported {} records", doc.records.len());
            Ok(())
        }
        Command::Serve { data, config, bind, idle_timeout } => {
            let config = load_config(config.as_deref())?;
            let loaded = load_table(&data, &config)?;
            let options = ServiceOptions { table_id: loaded.table_id, idle_timeout: Duration::from_secs(idle_timeout.max(1)) };
            let app = AppState::new(Arc::new(loaded.table), config, options);
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
            runtime
                .block_on(service::serve(app, bind))
                .map_err(|e| CliError::Io(format!("cannot serve on {bind}: {e}")))
        }
    }
}

/// Parses arguments, runs, and returns the process exit status.
pub fn main_with_args(args: impl IntoIterator<Item = String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("queuelens: {e}");
            e.exit_code()
        }
    }
}
