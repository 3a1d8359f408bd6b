//! Normalized charger information model and metric-domain types.
//!
//! Everything here is an immutable value type; the stores and engines in the
//! other modules operate on these without interior mutability.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, NaiveDate, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque unique charger identifier, stable across runs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChargerId(String);

impl ChargerId {
    pub fn new(value: impl Into<String>) -> Result<Self> {
        let value = value.into();
        if value.is_empty() {
            return Err(Error::InvalidValue("charger id must be nonempty".into()));
        }
        Ok(ChargerId(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ChargerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Seconds since the Unix epoch, UTC. All stored timestamps use this.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(i64);

impl Timestamp {
    pub fn from_unix(secs: i64) -> Result<Self> {
        if secs < 0 {
            return Err(Error::InvalidValue(format!(
                "timestamp {secs} is before the Unix epoch"
            )));
        }
        Ok(Timestamp(secs))
    }

    pub const fn as_secs(self) -> i64 {
        self.0
    }

    /// Parses an ISO-8601 / RFC 3339 timestamp with offset and converts to UTC.
    pub fn parse_rfc3339(s: &str) -> Result<Self> {
        let dt = DateTime::parse_from_rfc3339(s)
            .map_err(|e| Error::InvalidValue(format!("bad timestamp `{s}`: {e}")))?;
        Self::from_unix(dt.with_timezone(&Utc).timestamp())
    }

    pub fn to_rfc3339(self) -> String {
        Utc.timestamp_opt(self.0, 0)
            .single()
            .expect("nonnegative unix seconds always map to a UTC instant")
            .to_rfc3339_opts(SecondsFormat::Secs, true)
    }

    pub fn now() -> Self {
        Timestamp(Utc::now().timestamp().max(0))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

/// serde adapter for timestamp fields written as RFC 3339 strings
/// (`#[serde(with = "ts_rfc3339")]`).
pub mod ts_rfc3339 {
    use super::Timestamp;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &Timestamp, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Timestamp, D::Error> {
        let s = String::deserialize(d)?;
        Timestamp::parse_rfc3339(&s).map_err(serde::de::Error::custom)
    }
}

/// The six operational states a charger can be in at any instant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChargerStatus {
    Occupied,
    Available,
    Unavailable,
    Faulted,
    Unreachable,
    Unknown,
}

impl ChargerStatus {
    pub const ALL: [ChargerStatus; 6] = [
        ChargerStatus::Occupied,
        ChargerStatus::Available,
        ChargerStatus::Unavailable,
        ChargerStatus::Faulted,
        ChargerStatus::Unreachable,
        ChargerStatus::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChargerStatus::Occupied => "occupied",
            ChargerStatus::Available => "available",
            ChargerStatus::Unavailable => "unavailable",
            ChargerStatus::Faulted => "faulted",
            ChargerStatus::Unreachable => "unreachable",
            ChargerStatus::Unknown => "unknown",
        }
    }

    /// Exact (lowercase) storage-form parse.
    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|status| status.as_str() == s)
    }

    /// Case-insensitive mapping for source-system status strings.
    /// Callers map `None` to [`ChargerStatus::Unknown`] and log it.
    pub fn from_source(s: &str) -> Option<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Self::parse(&lower)
    }

    /// Whether the state counts as "up": available for use, or in use.
    pub fn is_up(self) -> bool {
        matches!(self, ChargerStatus::Occupied | ChargerStatus::Available)
    }

    fn index(self) -> usize {
        match self {
            ChargerStatus::Occupied => 0,
            ChargerStatus::Available => 1,
            ChargerStatus::Unavailable => 2,
            ChargerStatus::Faulted => 3,
            ChargerStatus::Unreachable => 4,
            ChargerStatus::Unknown => 5,
        }
    }
}

impl fmt::Display for ChargerStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifying information about a charger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargerMetadata {
    pub id: ChargerId,
    pub manufacturer: String,
    pub serial_number: String,
    pub location: String,
    pub model: Option<String>,
    pub power_rating_kw: Option<f64>,
    pub install_date: Option<NaiveDate>,
}

impl ChargerMetadata {
    pub fn validate(&self) -> Result<()> {
        if self.serial_number.is_empty() {
            return Err(Error::InvalidValue("serial_number must be nonempty".into()));
        }
        if let Some(kw) = self.power_rating_kw {
            if !kw.is_finite() || kw < 0.0 {
                return Err(Error::InvalidValue(format!(
                    "power_rating_kw must be nonnegative, got {kw}"
                )));
            }
        }
        Ok(())
    }
}

/// Point-in-time charger status observation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusSample {
    pub charger: ChargerId,
    pub at: Timestamp,
    pub status: ChargerStatus,
}

/// Timestamped free-text fault report. The reason is preserved verbatim.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub charger: ChargerId,
    pub at: Timestamp,
    pub reason: String,
}

impl FaultRecord {
    pub fn new(charger: ChargerId, at: Timestamp, reason: impl Into<String>) -> Result<Self> {
        let reason = reason.into();
        if reason.is_empty() {
            return Err(Error::InvalidValue("fault reason must be nonempty".into()));
        }
        Ok(FaultRecord {
            charger,
            at,
            reason,
        })
    }
}

/// A completed charging session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargingSession {
    pub charger: ChargerId,
    pub start: Timestamp,
    pub end: Timestamp,
    pub energy_kwh: f64,
}

impl ChargingSession {
    pub fn new(charger: ChargerId, start: Timestamp, end: Timestamp, energy_kwh: f64) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidValue(format!(
                "session end {end} precedes start {start}"
            )));
        }
        if !energy_kwh.is_finite() || energy_kwh < 0.0 {
            return Err(Error::InvalidValue(format!(
                "energy_kwh must be nonnegative, got {energy_kwh}"
            )));
        }
        Ok(ChargingSession {
            charger,
            start,
            end,
            energy_kwh,
        })
    }
}

/// Half-open reporting window `[start, end)` with a calendar label such as
/// `2024`, `2024-03`, `2024-W11`, or `2024-03-15`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodWindow {
    pub start: Timestamp,
    pub end: Timestamp,
    pub label: String,
}

impl PeriodWindow {
    pub fn new(start: Timestamp, end: Timestamp, label: impl Into<String>) -> Result<Self> {
        if start >= end {
            return Err(Error::EmptyHorizon(start.as_secs(), end.as_secs()));
        }
        Ok(PeriodWindow {
            start,
            end,
            label: label.into(),
        })
    }

    pub fn duration_seconds(&self) -> u64 {
        (self.end.as_secs() - self.start.as_secs()) as u64
    }
}

/// Integer seconds spent in each of the six states.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StateSeconds([u64; 6]);

impl StateSeconds {
    pub fn get(&self, status: ChargerStatus) -> u64 {
        self.0[status.index()]
    }

    pub fn add(&mut self, status: ChargerStatus, seconds: u64) {
        self.0[status.index()] += seconds;
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ChargerStatus, u64)> + '_ {
        ChargerStatus::ALL.into_iter().map(|s| (s, self.get(s)))
    }

    /// Seconds in the up aggregate (occupied or available).
    pub fn up(&self) -> u64 {
        self.get(ChargerStatus::Occupied) + self.get(ChargerStatus::Available)
    }
}

/// Per-charger, per-window accounting of time in each state.
///
/// Invariant: the six buckets sum to exactly the window length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateDurations {
    pub charger: ChargerId,
    pub window: PeriodWindow,
    pub seconds_by_state: StateSeconds,
}

/// Per-charger, per-window faulted time broken down by reported reason.
///
/// Invariant: the reason buckets sum to the faulted bucket of the matching
/// [`StateDurations`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaultReasonDurations {
    pub charger: ChargerId,
    pub window: PeriodWindow,
    pub seconds_by_reason: BTreeMap<String, u64>,
}

impl FaultReasonDurations {
    pub fn total(&self) -> u64 {
        self.seconds_by_reason.values().sum()
    }
}

/// Computed metric percentages for one charger over one window.
///
/// `uptime_pct` is `None` when the metric is undefined (zero denominator
/// under the exclude-unknown policy). Under the default policy the five
/// percentage buckets sum to 100 within 1e-9.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub charger: ChargerId,
    pub window: PeriodWindow,
    pub uptime_pct: Option<f64>,
    pub fault_time_pct: f64,
    pub unreachable_time_pct: f64,
    pub unavailable_time_pct: f64,
    pub unknown_time_pct: f64,
    pub fault_reason_pct: BTreeMap<String, f64>,
}
