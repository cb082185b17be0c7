//! Job record schema, derived fields and validation.

use std::fmt;
use std::str::FromStr;

use chrono::Weekday;
use serde::{Deserialize, Serialize};

use crate::time::{EpochSeconds, Timezone};

/// Dense row index assigned in ingest order. Never reassigned.
pub type RowId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    NumericInt,
    NumericFloat,
    Datetime,
    Categorical,
}

impl FieldKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, FieldKind::NumericInt | FieldKind::NumericFloat)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::NumericInt => "numeric_int",
            FieldKind::NumericFloat => "numeric_float",
            FieldKind::Datetime => "datetime",
            FieldKind::Categorical => "categorical",
        }
    }
}

/// Every column of a job table, source and derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    JobId,
    User,
    Queue,
    SubmitTime,
    StartTime,
    EndTime,
    NodesRequested,
    ExitCode,
    Priority,
    PredictedQueueWait,
    QueueWait,
    HoursUsed,
    DayOfWeek,
}

impl Field {
    /// Source columns in their documented order, followed by derived columns.
    pub const ALL: [Field; 13] = [
        Field::JobId,
        Field::User,
        Field::Queue,
        Field::SubmitTime,
        Field::StartTime,
        Field::EndTime,
        Field::NodesRequested,
        Field::ExitCode,
        Field::Priority,
        Field::PredictedQueueWait,
        Field::QueueWait,
        Field::HoursUsed,
        Field::DayOfWeek,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::JobId => "job_id",
            Field::User => "user",
            Field::Queue => "queue",
            Field::SubmitTime => "submit_time",
            Field::StartTime => "start_time",
            Field::EndTime => "end_time",
            Field::NodesRequested => "nodes_requested",
            Field::ExitCode => "exit_code",
            Field::Priority => "priority",
            Field::PredictedQueueWait => "predicted_queue_wait",
            Field::QueueWait => "queue_wait",
            Field::HoursUsed => "hours_used",
            Field::DayOfWeek => "day_of_week",
        }
    }

    pub fn kind(self) -> FieldKind {
        match self {
            Field::JobId | Field::User | Field::Queue | Field::Priority | Field::DayOfWeek => {
                FieldKind::Categorical
            }
            Field::SubmitTime | Field::StartTime | Field::EndTime => FieldKind::Datetime,
            Field::NodesRequested | Field::ExitCode | Field::QueueWait => FieldKind::NumericInt,
            Field::PredictedQueueWait | Field::HoursUsed => FieldKind::NumericFloat,
        }
    }

    pub fn is_derived(self) -> bool {
        matches!(self, Field::QueueWait | Field::HoursUsed | Field::DayOfWeek)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown field {0:?}")]
pub struct UnknownField(pub String);

impl FromStr for Field {
    type Err = UnknownField;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| UnknownField(s.to_string()))
    }
}

/// Visual channels a field can be bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    X,
    Y,
    Color,
    Categorical,
    Facet,
}

impl Channel {
    pub fn accepts(self, kind: FieldKind) -> bool {
        match self {
            Channel::X => kind.is_numeric() || kind == FieldKind::Datetime,
            Channel::Y | Channel::Color => kind.is_numeric(),
            Channel::Categorical | Channel::Facet => kind == FieldKind::Categorical,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::X => "x",
            Channel::Y => "y",
            Channel::Color => "color",
            Channel::Categorical => "categorical",
            Channel::Facet => "facet",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("field {field} ({}) cannot be bound to the {} channel", kind.as_str(), channel.name())]
pub struct ChannelKindError {
    pub channel: Channel,
    pub field: Field,
    pub kind: FieldKind,
}

/// Checks a field against the channel's kind rule.
pub fn check_channel(channel: Channel, field: Field) -> Result<(), ChannelKindError> {
    if channel.accepts(field.kind()) {
        Ok(())
    } else {
        Err(ChannelKindError { channel, field, kind: field.kind() })
    }
}

/// Field name to kind mapping of a job table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Schema {
    pub columns: Vec<(String, FieldKind)>,
}

impl Schema {
    pub fn jobs() -> Self {
        Schema {
            columns: Field::ALL.iter().map(|f| (f.name().to_string(), f.kind())).collect(),
        }
    }

    pub fn kind_of(&self, name: &str) -> Option<FieldKind> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, k)| *k)
    }

    /// Resolves a column name to a field of this schema.
    pub fn field(&self, name: &str) -> Result<Field, UnknownField> {
        match self.kind_of(name) {
            Some(_) => name.parse(),
            None => Err(UnknownField(name.to_string())),
        }
    }
}

pub const WEEKDAY_LABELS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

pub fn weekday_label(day: Weekday) -> &'static str {
    WEEKDAY_LABELS[day.num_days_from_monday() as usize]
}

/// Weekday of `submit_time` as observed in `tz`.
pub fn derive_day_of_week(submit_time: EpochSeconds, tz: Timezone) -> Weekday {
    tz.weekday(submit_time)
}

/// Candidate values for one record, prior to validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawRecord {
    pub job_id: Option<String>,
    pub user: Option<String>,
    pub queue: Option<String>,
    pub submit_time: Option<EpochSeconds>,
    pub start_time: Option<EpochSeconds>,
    pub end_time: Option<EpochSeconds>,
    pub nodes_requested: Option<i64>,
    pub exit_code: Option<i32>,
    pub priority: Option<String>,
    pub predicted_queue_wait: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("missing required field {0}")]
    MissingField(Field),
    #[error("temporal order violation: {0}")]
    TemporalOrderViolation(&'static str),
    #[error("nodes_requested must be at least 1, got {0}")]
    NonPositiveNodes(i64),
    #[error("invalid value {value:?} for {field}")]
    InvalidValue { field: Field, value: String },
}

impl ValidationError {
    /// Short rule name used in ingest reports.
    pub fn rule(&self) -> &'static str {
        match self {
            ValidationError::MissingField(_) => "MissingField",
            ValidationError::TemporalOrderViolation(_) => "TemporalOrderViolation",
            ValidationError::NonPositiveNodes(_) => "NonPositiveNodes",
            ValidationError::InvalidValue { .. } => "InvalidValue",
        }
    }
}

/// A validated job. Derived fields are always computed from the timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct JobRecord {
    job_id: String,
    user: String,
    queue: String,
    submit_time: EpochSeconds,
    start_time: EpochSeconds,
    end_time: EpochSeconds,
    nodes_requested: u32,
    exit_code: i32,
    priority: Option<String>,
    predicted_queue_wait: Option<f64>,
    queue_wait: i64,
    hours_used: f64,
    day_of_week: Weekday,
}

fn required<T>(v: Option<T>, field: Field) -> Result<T, ValidationError> {
    v.ok_or(ValidationError::MissingField(field))
}

fn non_blank(v: Option<String>, field: Field) -> Result<String, ValidationError> {
    match v {
        Some(s) if !s.trim().is_empty() => Ok(s),
        _ => Err(ValidationError::MissingField(field)),
    }
}

/// Validates a raw record and derives queue_wait, hours_used and day_of_week.
pub fn validate_record(raw: RawRecord, tz: Timezone) -> Result<JobRecord, ValidationError> {
    let job_id = non_blank(raw.job_id, Field::JobId)?;
    let user = non_blank(raw.user, Field::User)?;
    let queue = non_blank(raw.queue, Field::Queue)?;
    let submit_time = required(raw.submit_time, Field::SubmitTime)?;
    let start_time = required(raw.start_time, Field::StartTime)?;
    let end_time = required(raw.end_time, Field::EndTime)?;
    let nodes = required(raw.nodes_requested, Field::NodesRequested)?;
    let exit_code = required(raw.exit_code, Field::ExitCode)?;

    if start_time < submit_time {
        return Err(ValidationError::TemporalOrderViolation("start_time before submit_time"));
    }
    if end_time < start_time {
        return Err(ValidationError::TemporalOrderViolation("end_time before start_time"));
    }
    if nodes < 1 {
        return Err(ValidationError::NonPositiveNodes(nodes));
    }
    let nodes_requested = u32::try_from(nodes).map_err(|_| ValidationError::InvalidValue {
        field: Field::NodesRequested,
        value: nodes.to_string(),
    })?;
    if let Some(p) = raw.predicted_queue_wait {
        if !p.is_finite() {
            return Err(ValidationError::InvalidValue {
                field: Field::PredictedQueueWait,
                value: p.to_string(),
            });
        }
    }

    Ok(JobRecord {
        job_id,
        user,
        queue,
        submit_time,
        start_time,
        end_time,
        nodes_requested,
        exit_code,
        priority: raw.priority.filter(|p| !p.is_empty()),
        predicted_queue_wait: raw.predicted_queue_wait,
        queue_wait: start_time - submit_time,
        hours_used: (end_time - start_time) as f64 / 3600.0,
        day_of_week: derive_day_of_week(submit_time, tz),
    })
}

impl JobRecord {
    pub fn job_id(&self) -> &str {
        &self.job_id
    }
    pub fn user(&self) -> &str {
        &self.user
    }
    pub fn queue(&self) -> &str {
        &self.queue
    }
    pub fn submit_time(&self) -> EpochSeconds {
        self.submit_time
    }
    pub fn start_time(&self) -> EpochSeconds {
        self.start_time
    }
    pub fn end_time(&self) -> EpochSeconds {
        self.end_time
    }
    pub fn nodes_requested(&self) -> u32 {
        self.nodes_requested
    }
    pub fn exit_code(&self) -> i32 {
        self.exit_code
    }
    pub fn priority(&self) -> Option<&str> {
        self.priority.as_deref()
    }
    pub fn predicted_queue_wait(&self) -> Option<f64> {
        self.predicted_queue_wait
    }
    /// Seconds between submission and start.
    pub fn queue_wait(&self) -> i64 {
        self.queue_wait
    }
    pub fn hours_used(&self) -> f64 {
        self.hours_used
    }
    pub fn day_of_week(&self) -> Weekday {
        self.day_of_week
    }

    /// Value of a numeric or datetime field as `f64` (datetimes in epoch
    /// seconds). `None` for categorical fields and missing optionals.
    pub fn numeric(&self, field: Field) -> Option<f64> {
        match field {
            Field::SubmitTime => Some(self.submit_time as f64),
            Field::StartTime => Some(self.start_time as f64),
            Field::EndTime => Some(self.end_time as f64),
            Field::NodesRequested => Some(self.nodes_requested as f64),
            Field::ExitCode => Some(self.exit_code as f64),
            Field::PredictedQueueWait => self.predicted_queue_wait,
            Field::QueueWait => Some(self.queue_wait as f64),
            Field::HoursUsed => Some(self.hours_used),
            Field::JobId | Field::User | Field::Queue | Field::Priority | Field::DayOfWeek => None,
        }
    }

    /// Label of a categorical field. `None` for other kinds and missing optionals.
    pub fn label(&self, field: Field) -> Option<&str> {
        match field {
            Field::JobId => Some(&self.job_id),
            Field::User => Some(&self.user),
            Field::Queue => Some(&self.queue),
            Field::Priority => self.priority.as_deref(),
            Field::DayOfWeek => Some(weekday_label(self.day_of_week)),
            _ => None,
        }
    }

    /// Converts back to candidate values; `validate_record` of the result
    /// reproduces this record under the same timezone.
    pub fn to_raw(&self) -> RawRecord {
        RawRecord {
            job_id: Some(self.job_id.clone()),
            user: Some(self.user.clone()),
            queue: Some(self.queue.clone()),
            submit_time: Some(self.submit_time),
            start_time: Some(self.start_time),
            end_time: Some(self.end_time),
            nodes_requested: Some(self.nodes_requested as i64),
            exit_code: Some(self.exit_code),
            priority: self.priority.clone(),
            predicted_queue_wait: self.predicted_queue_wait,
        }
    }
}

/// Immutable, validated collection of job records. Row ids are positions
/// in ingest order.
#[derive(Debug, Clone, PartialEq)]
pub struct JobTable {
    schema: Schema,
    timezone: Timezone,
    records: Vec<JobRecord>,
}

impl JobTable {
    pub fn new(records: Vec<JobRecord>, timezone: Timezone) -> Self {
        assert!(records.len() <= u32::MAX as usize, "row ids are 32-bit");
        JobTable { schema: Schema::jobs(), timezone, records }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Timezone used to derive day_of_week at ingest.
    pub fn timezone(&self) -> Timezone {
        self.timezone
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[JobRecord] {
        &self.records
    }

    pub fn get(&self, id: RowId) -> Option<&JobRecord> {
        self.records.get(id as usize)
    }

    pub fn row_ids(&self) -> impl Iterator<Item = RowId> + '_ {
        0..self.records.len() as RowId
    }

    pub fn iter(&self) -> impl Iterator<Item = (RowId, &JobRecord)> + '_ {
        self.records.iter().enumerate().map(|(i, r)| (i as RowId, r))
    }

    /// Distinct labels of a categorical field, sorted.
    pub fn domain(&self, field: Field) -> Vec<String> {
        let mut labels: Vec<&str> = self.records.iter().filter_map(|r| r.label(field)).collect();
        labels.sort_unstable();
        labels.dedup();
        labels.into_iter().map(str::to_string).collect()
    }
}
