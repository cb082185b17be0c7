//! Timestamp parsing/formatting and the fixed-offset timezone used for
//! weekday derivation and datetime bucketing.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, FixedOffset, NaiveDateTime, TimeZone, Utc, Weekday};
use serde::{Deserialize, Serialize};

/// Seconds since the Unix epoch, UTC.
pub type EpochSeconds = i64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid timestamp {0:?}: expected ISO-8601 (e.g. 2023-06-01T12:00:00Z)")]
pub struct TimestampError(pub String);

/// Parses an ISO-8601 timestamp. Inputs without an offset are taken as UTC.
pub fn parse_timestamp(s: &str) -> Result<EpochSeconds, TimestampError> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%dT%H:%MZ"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(naive.and_utc().timestamp());
        }
    }
    if let Ok(date) = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(date.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp());
    }
    Err(TimestampError(s.to_string()))
}

/// Formats as `YYYY-MM-DDTHH:MM:SSZ`.
pub fn format_timestamp(t: EpochSeconds) -> String {
    match Utc.timestamp_opt(t, 0).single() {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => t.to_string(),
    }
}

/// A fixed UTC offset. Written as `UTC`, `UTC+05:30`, `UTC-12` or `+02:00`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Timezone(FixedOffset);

impl Timezone {
    pub const UTC: Timezone = Timezone(match FixedOffset::east_opt(0) {
        Some(o) => o,
        None => unreachable!(),
    });

    pub fn from_offset_seconds(secs: i32) -> Option<Self> {
        FixedOffset::east_opt(secs).map(Timezone)
    }

    pub fn offset(&self) -> FixedOffset {
        self.0
    }

    pub fn offset_seconds(&self) -> i32 {
        self.0.local_minus_utc()
    }

    pub fn local(&self, t: EpochSeconds) -> DateTime<FixedOffset> {
        self.0
            .timestamp_opt(t, 0)
            .single()
            .expect("epoch seconds within chrono range")
    }

    pub fn weekday(&self, t: EpochSeconds) -> Weekday {
        self.local(t).weekday()
    }
}

impl Default for Timezone {
    fn default() -> Self {
        Timezone::UTC
    }
}

impl fmt::Display for Timezone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let secs = self.offset_seconds();
        if secs == 0 {
            return f.write_str("UTC");
        }
        let sign = if secs < 0 { '-' } else { '+' };
        let abs = secs.unsigned_abs();
        write!(f, "UTC{}{:02}:{:02}", sign, abs / 3600, (abs % 3600) / 60)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid timezone {0:?}: expected UTC, UTC+HH:MM or +HH:MM")]
pub struct TimezoneError(pub String);

impl FromStr for Timezone {
    type Err = TimezoneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || TimezoneError(s.to_string());
        let t = s.trim();
        let rest = t
            .strip_prefix("UTC")
            .or_else(|| t.strip_prefix("utc"))
            .or_else(|| t.strip_prefix("Z"))
            .unwrap_or(t);
        if rest.is_empty() {
            return Ok(Timezone::UTC);
        }
        let (sign, digits) = if let Some(d) = rest.strip_prefix('+') {
            (1, d)
        } else if let Some(d) = rest.strip_prefix(['-', '\u{2212}']) {
            (-1, d)
        } else {
            return Err(err());
        };
        let (h, m) = match digits.split_once(':') {
            Some((h, m)) => (h, m),
            None if digits.len() == 4 => digits.split_at(2),
            None => (digits, "0"),
        };
        let h: i32 = h.parse().map_err(|_| err())?;
        let m: i32 = m.parse().map_err(|_| err())?;
        if !(0..=14).contains(&h) || !(0..60).contains(&m) {
            return Err(err());
        }
        Timezone::from_offset_seconds(sign * (h * 3600 + m * 60)).ok_or_else(err)
    }
}

impl Serialize for Timezone {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timezone {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
