//! Operational analytics over HPC scheduler job traces: ingest accounting
//! logs, bin them into summary grids and histograms faceted by queue, drive
//! brush/pin/hover selections and export the selected jobs.

pub mod binning;
pub mod config;
pub mod export;
pub mod ingest;
pub mod kv;
pub mod model;
pub mod selection;
pub mod stats;
pub mod synth;
pub mod time;
pub mod views;

pub use config::{resolve_config, Aggregation, ConfigDocument, EncodingConfig, ScaleChoice};
pub use model::{Field, FieldKind, JobRecord, JobTable, RowId};
pub use selection::{Mutation, SessionState};
pub use time::Timezone;
