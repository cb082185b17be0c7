//! Parses scheduler accounting exports into a [`JobTable`].
//!
//! Input is header-bearing CSV with the columns `job_id, user, queue,
//! submit_time, start_time, end_time, nodes_requested, exit_code` and
//! optionally `priority, predicted_queue_wait`. Columns `queue_wait` and
//! `hours_used` are tolerated but recomputed from the timestamps. Leading
//! `#` lines before the header are skipped. The JSON row documents written
//! by the export module are accepted as well.

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use crate::model::{validate_record, Field, JobTable, RawRecord, ValidationError};
use crate::time::{parse_timestamp, Timezone};

pub const REQUIRED_COLUMNS: [Field; 8] = [
    Field::JobId,
    Field::User,
    Field::Queue,
    Field::SubmitTime,
    Field::StartTime,
    Field::EndTime,
    Field::NodesRequested,
    Field::ExitCode,
];

pub const DEFAULT_MAX_REJECT_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(InputFormat::Csv),
            "json" => Ok(InputFormat::Json),
            _ => Err(format!("unknown format {s:?}, expected csv or json")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    pub format: InputFormat,
    pub timezone: Timezone,
    /// Largest tolerated fraction of rejected rows.
    pub max_reject_fraction: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            format: InputFormat::Csv,
            timezone: Timezone::UTC,
            max_reject_fraction: DEFAULT_MAX_REJECT_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    /// 1-based line in the source (CSV) or 1-based row index (JSON).
    pub line: u64,
    pub rule: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub source: String,
    pub accepted_count: usize,
    pub rejected_count: usize,
    pub rejections: Vec<Rejection>,
    /// Rows whose reported queue_wait/hours_used disagree with their
    /// timestamps by more than a second.
    pub warnings: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("unreadable source {source_name}: {reason}")]
    UnreadableSource { source_name: String, reason: String },
    #[error("schema mismatch: missing required column(s) {}", .missing.join(", "))]
    SchemaMismatch { missing: Vec<String> },
    #[error("{rejected} of {total} rows rejected, above the {:.0}% limit", limit * 100.0)]
    RejectionThresholdExceeded { rejected: usize, total: usize, limit: f64, report: Box<IngestReport> },
}

/// Tolerance for reported derived durations, in seconds.
const DERIVED_TOLERANCE_S: f64 = 1.0;

pub fn ingest_table<R: Read>(
    mut reader: R,
    source: &str,
    options: &IngestOptions,
) -> Result<(JobTable, IngestReport), IngestError> {
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|e| IngestError::UnreadableSource {
        source_name: source.to_string(),
        reason: e.to_string(),
    })?;
    let rows = match options.format {
        InputFormat::Csv => csv_rows(&text, source)?,
        InputFormat::Json => json_rows(&text, source)?,
    };
    build_table(rows, source, options)
}

pub fn ingest_path(path: &Path, options: &IngestOptions) -> Result<(JobTable, IngestReport), IngestError> {
    let name = path.display().to_string();
    let file = fs::File::open(path).map_err(|e| IngestError::UnreadableSource {
        source_name: name.clone(),
        reason: e.to_string(),
    })?;
    ingest_table(file, &name, options)
}

/// A source row as column name to cell text, or a row-level parse failure.
type SourceRow = (u64, Result<HashMap<String, String>, String>);

fn check_columns<'a>(columns: impl Iterator<Item = &'a str> + Clone) -> Result<(), IngestError> {
    let missing: Vec<String> = REQUIRED_COLUMNS
        .iter()
        .filter(|f| !columns.clone().any(|c| c == f.name()))
        .map(|f| f.name().to_string())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(IngestError::SchemaMismatch { missing })
    }
}

fn csv_rows(text: &str, source: &str) -> Result<Vec<SourceRow>, IngestError> {
    // Skip the `#` preamble written by the exporter; data rows are never
    // treated as comments.
    let mut skipped = 0u64;
    let mut body = text;
    while body.starts_with('#') {
        skipped += 1;
        body = body.split_once('\n').map(|(_, rest)| rest).unwrap_or("");
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::UnreadableSource { source_name: source.to_string(), reason: e.to_string() })?
        .clone();
    check_columns(headers.iter())?;

    let mut rows = Vec::new();
    for result in rdr.records() {
        match result {
            Ok(rec) => {
                let line = rec.position().map_or(0, |p| p.line()) + skipped;
                if rec.len() != headers.len() {
                    rows.push((line, Err(format!("expected {} fields, found {}", headers.len(), rec.len()))));
                    continue;
                }
                let map = headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect();
                rows.push((line, Ok(map)));
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line()) + skipped;
                if matches!(e.kind(), csv::ErrorKind::Io(_) | csv::ErrorKind::Utf8 { .. }) && line == 0 {
                    return Err(IngestError::UnreadableSource { source_name: source.to_string(), reason: e.to_string() });
                }
                rows.push((line, Err(e.to_string())));
            }
        }
    }
    Ok(rows)
}

fn json_rows(text: &str, source: &str) -> Result<Vec<SourceRow>, IngestError> {
    let unreadable = |reason: String| IngestError::UnreadableSource { source_name: source.to_string(), reason };
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| unreadable(e.to_string()))?;
    let rows = doc
        .get("rows")
        .or(Some(&doc))
        .and_then(|v| v.as_array())
        .ok_or_else(|| unreadable("expected an array of row objects or {\"rows\": [...]}".into()))?;
    let columns: Vec<String> = match doc.get("columns").and_then(|c| c.as_array()) {
        Some(cols) => cols.iter().filter_map(|c| c.as_str().map(str::to_string)).collect(),
        None => rows
            .first()
            .and_then(|r| r.as_object())
            .map(|o| o.keys().cloned().collect())
            .unwrap_or_default(),
    };
    if !rows.is_empty() || doc.get("columns").is_some() {
        check_columns(columns.iter().map(String::as_str))?;
    }
    Ok(rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let line = i as u64 + 1;
            let Some(obj) = row.as_object() else {
                return (line, Err("row is not an object".to_string()));
            };
            let map = obj
                .iter()
                .map(|(k, v)| {
                    let s = match v {
                        serde_json::Value::Null => String::new(),
                        serde_json::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    };
                    (k.clone(), s)
                })
                .collect();
            (line, Ok(map))
        })
        .collect())
}

fn cell(row: &HashMap<String, String>, field: Field) -> Option<&str> {
    row.get(field.name()).map(|s| s.trim()).filter(|s| !s.is_empty())
}

fn parse_cell<T: std::str::FromStr>(row: &HashMap<String, String>, field: Field) -> Result<Option<T>, ValidationError> {
    cell(row, field)
        .map(|s| s.parse::<T>().map_err(|_| ValidationError::InvalidValue { field, value: s.to_string() }))
        .transpose()
}

fn parse_time(row: &HashMap<String, String>, field: Field) -> Result<Option<i64>, ValidationError> {
    cell(row, field)
        .map(|s| parse_timestamp(s).map_err(|_| ValidationError::InvalidValue { field, value: s.to_string() }))
        .transpose()
}

fn raw_record(row: &HashMap<String, String>) -> Result<RawRecord, ValidationError> {
    let text = |f| cell(row, f).map(str::to_string);
    Ok(RawRecord {
        job_id: text(Field::JobId),
        user: text(Field::User),
        queue: text(Field::Queue),
        submit_time: parse_time(row, Field::SubmitTime)?,
        start_time: parse_time(row, Field::StartTime)?,
        end_time: parse_time(row, Field::EndTime)?,
        nodes_requested: parse_cell(row, Field::NodesRequested)?,
        exit_code: parse_cell(row, Field::ExitCode)?,
        priority: text(Field::Priority),
        predicted_queue_wait: parse_cell(row, Field::PredictedQueueWait)?,
    })
}

fn build_table(rows: Vec<SourceRow>, source: &str, options: &IngestOptions) -> Result<(JobTable, IngestReport), IngestError> {
    let total = rows.len();
    let mut records = Vec::with_capacity(total);
    let mut report = IngestReport {
        source: source.to_string(),
        accepted_count: 0,
        rejected_count: 0,
        rejections: Vec::new(),
        warnings: Vec::new(),
    };
    for (line, row) in rows {
        let row = match row {
            Ok(r) => r,
            Err(message) => {
                report.rejections.push(Rejection { line, rule: "MalformedRow", message });
                continue;
            }
        };
        match raw_record(&row).and_then(|raw| validate_record(raw, options.timezone)) {
            Ok(rec) => {
                if let Ok(Some(reported)) = parse_cell::<f64>(&row, Field::QueueWait) {
                    if (reported - rec.queue_wait() as f64).abs() > DERIVED_TOLERANCE_S {
                        report.warnings.push(format!(
                            "line {line}: reported queue_wait {reported} differs from timestamps ({} s)",
                            rec.queue_wait()
                        ));
                    }
                }
                if let Ok(Some(reported)) = parse_cell::<f64>(&row, Field::HoursUsed) {
                    if ((reported - rec.hours_used()) * 3600.0).abs() > DERIVED_TOLERANCE_S {
                        report.warnings.push(format!(
                            "line {line}: reported hours_used {reported} differs from timestamps ({} h)",
                            rec.hours_used()
                        ));
                    }
                }
                records.push(rec);
            }
            Err(e) => report.rejections.push(Rejection { line, rule: e.rule(), message: e.to_string() }),
        }
    }
    for w in &report.warnings {
        log::warn!("{source}: {w}");
    }
    report.accepted_count = records.len();
    report.rejected_count = report.rejections.len();
    if total > 0 && report.rejected_count as f64 / total as f64 > options.max_reject_fraction {
        return Err(IngestError::RejectionThresholdExceeded {
            rejected: report.rejected_count,
            total,
            limit: options.max_reject_fraction,
            report: Box::new(report),
        });
    }
    Ok((JobTable::new(records, options.timezone), report))
}
