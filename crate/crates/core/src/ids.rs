//! Identifier and timestamp newtypes shared across the pipeline.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Post identifier (question or answer) from the dump's `Id` attribute.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct PostId(pub i64);

/// User identifier from the dump's `OwnerUserId` / `Users.Id` attributes.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct UserId(pub i64);

impl fmt::Display for PostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// UTC instant stored as epoch milliseconds.
///
/// The dump carries naive timestamps (`2020-12-01T08:15:00.123`); they are
/// interpreted as UTC. Millisecond integers round-trip exactly through JSON.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn parse(s: &str) -> Option<Self> {
        let formats = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%d"];
        for fmt in formats {
            if fmt == "%Y-%m-%d" {
                if let Ok(d) = chrono::NaiveDate::parse_from_str(s, fmt) {
                    let dt = d.and_hms_opt(0, 0, 0)?;
                    return Some(Timestamp(dt.and_utc().timestamp_millis()));
                }
            } else if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(s, fmt) {
                return Some(Timestamp(dt.and_utc().timestamp_millis()));
            }
        }
        None
    }

    pub fn as_seconds_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match chrono::DateTime::from_timestamp_millis(self.0) {
            Some(dt) => write!(f, "{}", dt.format("%Y-%m-%dT%H:%M:%S%.3f")),
            None => write!(f, "@{}", self.0),
        }
    }
}
