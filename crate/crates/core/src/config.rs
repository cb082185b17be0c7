//! Encoding configuration: which fields drive the x, y, color, categorical
//! and facet channels, plus aggregation and binning choices.
//!
//! The same key set is accepted from a `key = value` text document and from
//! a JSON object (the service message body).

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::kv::{self, KvError};
use crate::model::{check_channel, Channel, ChannelKindError, Field, FieldKind, Schema, UnknownField};
use crate::time::Timezone;

pub const DEFAULT_X_BINS: usize = 40;
pub const DEFAULT_Y_BINS: usize = 20;
pub const MAX_BINS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Mean,
    Median,
    Sum,
    Count,
    Max,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::Median => "median",
            Aggregation::Sum => "sum",
            Aggregation::Count => "count",
            Aggregation::Max => "max",
        }
    }

    /// Aggregates a nonempty slice; `None` when `values` is empty.
    pub fn apply(self, values: &mut [f64]) -> Option<f64> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        Some(match self {
            Aggregation::Mean => values.iter().sum::<f64>() / n,
            Aggregation::Sum => values.iter().sum(),
            Aggregation::Count => n,
            Aggregation::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Aggregation::Median => {
                values.sort_unstable_by(f64::total_cmp);
                let mid = values.len() / 2;
                if values.len() % 2 == 1 {
                    values[mid]
                } else {
                    (values[mid - 1] + values[mid]) / 2.0
                }
            }
        })
    }
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "median" => Ok(Aggregation::Median),
            "sum" => Ok(Aggregation::Sum),
            "count" => Ok(Aggregation::Count),
            "max" => Ok(Aggregation::Max),
            _ => Err("expected one of mean, median, sum, count, max".into()),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Requested axis scale. `Auto` infers linear or log from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleChoice {
    Auto,
    Linear,
    Log,
}

impl ScaleChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            ScaleChoice::Auto => "auto",
            ScaleChoice::Linear => "linear",
            ScaleChoice::Log => "log",
        }
    }
}

impl FromStr for ScaleChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(ScaleChoice::Auto),
            "linear" => Ok(ScaleChoice::Linear),
            "log" => Ok(ScaleChoice::Log),
            _ => Err("expected one of auto, linear, log".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    UnknownField(#[from] UnknownField),
    #[error(transparent)]
    ChannelKind(#[from] ChannelKindError),
    #[error("bad value {value:?} for {key}: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error(transparent)]
    Syntax(#[from] KvError),
}

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue { key: key.to_string(), value: value.to_string(), reason: reason.into() }
}

/// A resolved, validated encoding configuration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct EncodingConfig {
    pub x_field: Field,
    pub y_field: Field,
    pub color_field: Field,
    pub categorical_field: Field,
    pub facet_field: Field,
    pub aggregation: Aggregation,
    pub x_scale: ScaleChoice,
    pub y_scale: ScaleChoice,
    pub x_bins: usize,
    pub y_bins: usize,
    pub timezone: Timezone,
    /// Bin every facet over the union of facet scopes instead of its own.
    pub share_axes: bool,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            x_field: Field::SubmitTime,
            y_field: Field::QueueWait,
            color_field: Field::NodesRequested,
            categorical_field: Field::User,
            facet_field: Field::Queue,
            aggregation: Aggregation::Mean,
            x_scale: ScaleChoice::Auto,
            y_scale: ScaleChoice::Auto,
            x_bins: DEFAULT_X_BINS,
            y_bins: DEFAULT_Y_BINS,
            timezone: Timezone::UTC,
            share_axes: false,
        }
    }
}

/// Recognized document keys, in canonical output order.
pub const KEYS: [&str; 12] = [
    "x_field",
    "y_field",
    "color_field",
    "categorical_field",
    "facet_field",
    "aggregation",
    "x_scale",
    "y_scale",
    "x_bins",
    "y_bins",
    "timezone",
    "share_axes",
];

impl EncodingConfig {
    /// Checks channel kind rules, bin counts and scale/kind compatibility.
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_channel(Channel::X, self.x_field)?;
        check_channel(Channel::Y, self.y_field)?;
        check_channel(Channel::Color, self.color_field)?;
        check_channel(Channel::Categorical, self.categorical_field)?;
        check_channel(Channel::Facet, self.facet_field)?;
        for (key, bins) in [("x_bins", self.x_bins), ("y_bins", self.y_bins)] {
            if !(1..=MAX_BINS).contains(&bins) {
                return Err(bad(key, &bins.to_string(), format!("must be in 1..={MAX_BINS}")));
            }
        }
        if self.x_field.kind() == FieldKind::Datetime && self.x_scale == ScaleChoice::Log {
            return Err(bad("x_scale", "log", "datetime axes bin by calendar unit"));
        }
        Ok(())
    }

    /// Canonical key-value text. Resolving it yields `self` again.
    pub fn to_document(&self) -> String {
        kv::write(KEYS.iter().map(|&k| (k, self.value_of(k))))
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "x_field" => self.x_field.name().to_string(),
            "y_field" => self.y_field.name().to_string(),
            "color_field" => self.color_field.name().to_string(),
            "categorical_field" => self.categorical_field.name().to_string(),
            "facet_field" => self.facet_field.name().to_string(),
            "aggregation" => self.aggregation.to_string(),
            "x_scale" => self.x_scale.as_str().to_string(),
            "y_scale" => self.y_scale.as_str().to_string(),
            "x_bins" => self.x_bins.to_string(),
            "y_bins" => self.y_bins.to_string(),
            "timezone" => self.timezone.to_string(),
            "share_axes" => self.share_axes.to_string(),
            _ => unreachable!("unknown config key {key}"),
        }
    }

    /// Hex digest of the canonical document (first 16 hex digits of SHA-256).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_document().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Unresolved key/value pairs from a text document or JSON body.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigDocument {
    entries: IndexMap<String, String>,
}

impl ConfigDocument {
    pub fn parse_text(text: &str) -> Result<Self, ConfigError> {
        Ok(ConfigDocument { entries: kv::parse(text)? })
    }

    /// Accepts a JSON object whose values are strings, numbers or booleans.
    pub fn from_json(value: &serde_json::Value) -> Result<Self, ConfigError> {
        let obj = value
            .as_object()
            .ok_or_else(|| bad("<document>", &value.to_string(), "expected a JSON object"))?;
        let mut entries = IndexMap::new();
        for (k, v) in obj {
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => b.to_string(),
                other => return Err(bad(k, &other.to_string(), "expected a scalar")),
            };
            entries.insert(k.clone(), s);
        }
        Ok(ConfigDocument { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Applies defaults, overlays the document's keys and validates the result
/// against `schema`.
pub fn resolve_config(doc: &ConfigDocument, schema: &Schema) -> Result<EncodingConfig, ConfigError> {
    resolve_over(EncodingConfig::default(), doc, schema)
}

/// Like [`resolve_config`] but overlays onto `base` instead of the defaults.
pub fn resolve_over(
    base: EncodingConfig,
    doc: &ConfigDocument,
    schema: &Schema,
) -> Result<EncodingConfig, ConfigError> {
    let mut cfg = base;
    for (key, value) in &doc.entries {
        let field = || schema.field(value);
        match key.as_str() {
            "x_field" => cfg.x_field = field()?,
            "y_field" => cfg.y_field = field()?,
            "color_field" => cfg.color_field = field()?,
            "categorical_field" => cfg.categorical_field = field()?,
            "facet_field" => cfg.facet_field = field()?,
            "aggregation" => cfg.aggregation = value.parse().map_err(|r: String| bad(key, value, r))?,
            "x_scale" => cfg.x_scale = value.parse().map_err(|r: String| bad(key, value, r))?,
            "y_scale" => cfg.y_scale = value.parse().map_err(|r: String| bad(key, value, r))?,
            "x_bins" => cfg.x_bins = parse_bins(key, value)?,
            "y_bins" => cfg.y_bins = parse_bins(key, value)?,
            "timezone" => {
                cfg.timezone = value.parse().map_err(|e: crate::time::TimezoneError| bad(key, value, e.to_string()))?
            }
            "share_axes" => {
                cfg.share_axes = value.parse().map_err(|_| bad(key, value, "expected true or false"))?
            }
            _ => return Err(bad(key, value, "unknown configuration key")),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_bins(key: &str, value: &str) -> Result<usize, ConfigError> {
    value.parse().map_err(|_| bad(key, value, "expected a positive integer"))
}
