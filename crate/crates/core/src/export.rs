//! Materializes the selected records of a session as a CSV or JSON
//! document that re-ingests to the same records.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::model::{weekday_label, Field, JobRecord, JobTable, RowId};
use crate::selection::{describe, SessionState};
use crate::time::format_timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            _ => Err(format!("unknown export format {s:?}, expected csv or json")),
        }
    }
}

/// How a selection was made. Carries no wall-clock time, so identical
/// states always export identical bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub timezone: String,
    pub revision: u64,
    pub selection: String,
    pub row_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportDocument {
    pub columns: Vec<&'static str>,
    /// Selected row ids by ascending submit_time, ties by row id.
    pub row_ids: Vec<RowId>,
    pub records: Vec<JobRecord>,
    pub provenance: Provenance,
}

pub fn export_columns() -> Vec<&'static str> {
    Field::ALL.iter().map(|f| f.name()).collect()
}

/// The session's current selection as an export document.
pub fn retrieve_selected_records(table: &JobTable, session: &SessionState) -> ExportDocument {
    let records = table.records();
    let mut ids = session.selection().ids();
    ids.sort_by_key(|&id| (records[id as usize].submit_time(), id));
    ExportDocument {
        columns: export_columns(),
        records: ids.iter().map(|&id| records[id as usize].clone()).collect(),
        provenance: Provenance {
            config_hash: session.config().hash(),
            timezone: table.timezone().to_string(),
            revision: session.revision(),
            selection: describe(session),
            row_count: ids.len(),
        },
        row_ids: ids,
    }
}

/// Every record of `table` in submit order, e.g. for writing a generated trace.
pub fn table_document(table: &JobTable, config_hash: &str, description: &str) -> ExportDocument {
    let records = table.records();
    let mut ids: Vec<RowId> = table.row_ids().collect();
    ids.sort_by_key(|&id| (records[id as usize].submit_time(), id));
    ExportDocument {
        columns: export_columns(),
        records: ids.iter().map(|&id| records[id as usize].clone()).collect(),
        provenance: Provenance {
            config_hash: config_hash.to_string(),
            timezone: table.timezone().to_string(),
            revision: 0,
            selection: description.to_string(),
            row_count: ids.len(),
        },
        row_ids: ids,
    }
}

fn cell(rec: &JobRecord, field: Field) -> String {
    match field {
        Field::SubmitTime => format_timestamp(rec.submit_time()),
        Field::StartTime => format_timestamp(rec.start_time()),
        Field::EndTime => format_timestamp(rec.end_time()),
        Field::NodesRequested => rec.nodes_requested().to_string(),
        Field::ExitCode => rec.exit_code().to_string(),
        Field::PredictedQueueWait => rec.predicted_queue_wait().map(|v| v.to_string()).unwrap_or_default(),
        Field::QueueWait => rec.queue_wait().to_string(),
        Field::HoursUsed => rec.hours_used().to_string(),
        Field::DayOfWeek => weekday_label(rec.day_of_week()).to_string(),
        Field::JobId | Field::User | Field::Queue | Field::Priority => {
            rec.label(field).unwrap_or_default().to_string()
        }
    }
}

fn json_cell(rec: &JobRecord, field: Field) -> Value {
    match field {
        Field::NodesRequested => Value::from(rec.nodes_requested()),
        Field::ExitCode => Value::from(rec.exit_code()),
        Field::QueueWait => Value::from(rec.queue_wait()),
        Field::HoursUsed => Value::from(rec.hours_used()),
        Field::PredictedQueueWait => rec.predicted_queue_wait().map_or(Value::Null, Value::from),
        Field::Priority => rec.priority().map_or(Value::Null, Value::from),
        _ => Value::from(cell(rec, field)),
    }
}

fn csv_bytes(doc: &ExportDocument) -> Vec<u8> {
    let p = &doc.provenance;
    let mut out = Vec::new();
    for (k, v) in [
        ("config_hash", p.config_hash.clone()),
        ("timezone", p.timezone.clone()),
        ("revision", p.revision.to_string()),
        ("selection", p.selection.replace('\n', " ")),
        ("row_count", p.row_count.to_string()),
    ] {
        writeln!(out, "# {k}: {v}").expect("write to Vec");
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(&doc.columns).expect("write to Vec");
    for rec in &doc.records {
        w.write_record(Field::ALL.iter().map(|&f| cell(rec, f))).expect("write to Vec");
    }
    w.into_inner().expect("flush to Vec")
}

fn json_bytes(doc: &ExportDocument) -> Vec<u8> {
    let rows: Vec<Value> = doc
        .records
        .iter()
        .map(|rec| Value::Object(Field::ALL.iter().map(|&f| (f.name().to_string(), json_cell(rec, f))).collect::<Map<_, _>>()))
        .collect();
    let body = serde_json::json!({
        "provenance": doc.provenance,
        "columns": doc.columns,
        "rows": rows,
    });
    let mut out = serde_json::to_vec_pretty(&body).expect("serializable");
    out.push(b'\n');
    out
}

/// Serializes a document. Identical documents yield identical bytes.
pub fn render(doc: &ExportDocument, format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Csv => csv_bytes(doc),
        ExportFormat::Json => json_bytes(doc),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WriteConfirmation {
    pub path: PathBuf,
    pub rows: usize,
    pub bytes: usize,
}

#[derive(Debug, thiserror::Error)]
#[error("cannot write export to {path}: {source}")]
pub struct ExportError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

pub fn write_export(doc: &ExportDocument, destination: &Path, format: ExportFormat) -> Result<WriteConfirmation, ExportError> {
    let bytes = render(doc, format);
    fs::write(destination, &bytes).map_err(|source| ExportError { path: destination.to_path_buf(), source })?;
    Ok(WriteConfirmation { path: destination.to_path_buf(), rows: doc.records.len(), bytes: bytes.len() })
}
