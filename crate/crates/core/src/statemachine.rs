//! Event classification and the finite state machine that turns raw data
//! items into normalized model mutations.
//!
//! Event names arrive as free text from the source system. An ordered rule
//! table maps them onto a closed set of categories, and a total transition
//! function maps (current status, category) to the next status. The
//! transition table lives in [`next_status`] so it can be replaced wholesale
//! if a source system turns out to behave differently.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{
    ChargerId, ChargerMetadata, ChargerStatus, ChargingSession, FaultRecord, StatusSample,
    Timestamp,
};
use crate::rawstore::{RawDataItem, RawItemType};
use crate::store::Store;

/// Directed event categories.
///
/// Undirected "network" and "power" groupings cannot drive a memoryless
/// state machine, so they are split into lost/restored and off/on pairs;
/// the classification rules carry the direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventCategory {
    Informational,
    Fault,
    FaultCleared,
    NetworkLost,
    NetworkRestored,
    PowerOff,
    PowerOn,
}

impl EventCategory {
    pub const ALL: [EventCategory; 7] = [
        EventCategory::Informational,
        EventCategory::Fault,
        EventCategory::FaultCleared,
        EventCategory::NetworkLost,
        EventCategory::NetworkRestored,
        EventCategory::PowerOff,
        EventCategory::PowerOn,
    ];
}

/// How a rule pattern is matched against an event name.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    #[default]
    Substring,
    Exact,
}

/// One ordered classification rule. Matching is case-insensitive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRule {
    pub pattern: String,
    #[serde(default, rename = "match")]
    pub kind: PatternKind,
    pub category: EventCategory,
}

impl ClassificationRule {
    pub fn substring(pattern: &str, category: EventCategory) -> Self {
        ClassificationRule {
            pattern: pattern.to_string(),
            kind: PatternKind::Substring,
            category,
        }
    }

    fn matches(&self, lowercase_name: &str) -> bool {
        let pat = self.pattern.to_ascii_lowercase();
        match self.kind {
            PatternKind::Substring => lowercase_name.contains(&pat),
            PatternKind::Exact => lowercase_name == pat,
        }
    }
}

/// Ordered first-match-wins rule table with a default category.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationRules {
    rules: Vec<ClassificationRule>,
    default_category: EventCategory,
}

impl ClassificationRules {
    pub fn new(rules: Vec<ClassificationRule>, default_category: EventCategory) -> Self {
        ClassificationRules {
            rules,
            default_category,
        }
    }

    /// Rule table shipped with the engine. Covers the fault names observed
    /// in the reference fleet plus generic network/power phrasing. Order
    /// matters: cleared/restored phrases must precede their fault/lost
    /// counterparts.
    pub fn shipped_defaults() -> Self {
        use EventCategory::*;
        let rules = vec![
            ClassificationRule::substring("fault cleared", FaultCleared),
            ClassificationRule::substring("error cleared", FaultCleared),
            ClassificationRule::substring("tamper detect", Fault),
            ClassificationRule::substring("maintenance required", Fault),
            ClassificationRule::substring("data partition full", Fault),
            ClassificationRule::substring("fault", Fault),
            ClassificationRule::substring("error", Fault),
            ClassificationRule::substring("malfunction", Fault),
            ClassificationRule::substring("network restored", NetworkRestored),
            ClassificationRule::substring("connection restored", NetworkRestored),
            ClassificationRule::substring("network lost", NetworkLost),
            ClassificationRule::substring("connection lost", NetworkLost),
            ClassificationRule::substring("power restored", PowerOn),
            ClassificationRule::substring("powered on", PowerOn),
            ClassificationRule::substring("power on", PowerOn),
            ClassificationRule::substring("powered off", PowerOff),
            ClassificationRule::substring("power off", PowerOff),
            ClassificationRule::substring("powered down", PowerOff),
            ClassificationRule::substring("online", NetworkRestored),
            ClassificationRule::substring("offline", NetworkLost),
        ];
        ClassificationRules::new(rules, Informational)
    }

    /// Returns the first matching rule's category, else the default.
    pub fn classify(&self, event_name: &str) -> EventCategory {
        let lower = event_name.to_ascii_lowercase();
        self.rules
            .iter()
            .find(|r| r.matches(&lower))
            .map(|r| r.category)
            .unwrap_or(self.default_category)
    }
}

impl Default for ClassificationRules {
    fn default() -> Self {
        Self::shipped_defaults()
    }
}

/// Classifies an event name under the given rules.
pub fn classify_event(event_name: &str, rules: &ClassificationRules) -> EventCategory {
    rules.classify(event_name)
}

/// Total transition function over all (status, category) pairs.
///
/// Unrecognized events never change state (they classify as informational),
/// and recovery categories are no-ops unless the charger is in the matching
/// degraded state, so the machine never fabricates downtime.
pub fn next_status(current: ChargerStatus, category: EventCategory) -> ChargerStatus {
    use ChargerStatus::*;
    use EventCategory::*;
    match category {
        Informational => current,
        Fault => Faulted,
        FaultCleared => match current {
            Faulted => Available,
            other => other,
        },
        NetworkLost => match current {
            Unavailable => Unavailable,
            _ => Unreachable,
        },
        NetworkRestored => match current {
            Unreachable => Available,
            other => other,
        },
        PowerOff => Unavailable,
        PowerOn => match current {
            Unavailable => Available,
            other => other,
        },
    }
}

/// Outcome of applying one raw data item to the model store.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ApplyOutcome {
    /// Mutations were applied.
    Applied(MutationCounts),
    /// An identical item (by content digest) was applied earlier; no-op.
    DuplicateSkipped,
    /// The payload did not match the claimed item type; recorded and skipped.
    Quarantined(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MutationCounts {
    pub chargers_created: u64,
    pub samples_appended: u64,
    pub faults_appended: u64,
    pub sessions_inserted: u64,
    /// Overview rows whose source status string was unrecognized and
    /// therefore mapped to `unknown`.
    pub unrecognized_statuses: u64,
}

/// Applies raw data items to the normalized model, in chronological order.
///
/// Tracks each charger's current status (the latest status sample by
/// timestamp, then insertion order) so the state machine can compute
/// transitions. Idempotent across re-runs: items whose content digest has
/// already been applied are skipped.
pub struct Normalizer<'a> {
    store: &'a Store,
    rules: ClassificationRules,
    manufacturer_default: String,
    // charger -> (sample time, sample rowid, status) of the latest sample
    current: HashMap<ChargerId, (Timestamp, i64, ChargerStatus)>,
}

impl<'a> Normalizer<'a> {
    pub fn new(store: &'a Store, rules: ClassificationRules) -> Self {
        Normalizer {
            store,
            rules,
            manufacturer_default: "unknown".to_string(),
            current: HashMap::new(),
        }
    }

    /// Applies one unprocessed raw item and returns what happened.
    /// Does not mark the item processed; the caller owns queue bookkeeping.
    /// A quarantined item leaves no model mutations behind, even when it
    /// failed part-way through a multi-row payload.
    pub fn apply_raw_item(&mut self, item: &RawDataItem) -> Result<ApplyOutcome> {
        let digest = item.digest();
        if self.store.is_applied(&digest)? {
            return Ok(ApplyOutcome::DuplicateSkipped);
        }

        let payload: Value = match serde_json::from_str(&item.payload) {
            Ok(v) => v,
            Err(e) => return self.quarantine(item, format!("payload is not valid JSON: {e}")),
        };

        self.store.savepoint("apply_item")?;
        let applied = match item.item_type {
            RawItemType::StationOverview => self.apply_station_overview(item, &payload),
            RawItemType::ChargerEvent => self.apply_charger_event(item, &payload),
            RawItemType::ChargingSession => self.apply_charging_session(&payload),
            RawItemType::ChargingSessionStart => {
                self.apply_session_edge(&payload, ChargerStatus::Occupied)
            }
            RawItemType::ChargingSessionEnd => {
                self.apply_session_edge(&payload, ChargerStatus::Available)
            }
        };

        match applied {
            Ok(counts) => {
                self.store.record_applied(&digest, item.raw_id)?;
                self.store.release_savepoint("apply_item")?;
                Ok(ApplyOutcome::Applied(counts))
            }
            Err(PayloadError(msg)) => {
                self.store.rollback_savepoint("apply_item")?;
                // the cache may reference rolled-back samples
                self.current.clear();
                self.quarantine(item, msg)
            }
        }
    }

    fn quarantine(&self, item: &RawDataItem, error: String) -> Result<ApplyOutcome> {
        self.store
            .quarantine_item(item.raw_id, item.item_type, &error)?;
        Ok(ApplyOutcome::Quarantined(error))
    }

    fn apply_station_overview(
        &mut self,
        item: &RawDataItem,
        payload: &Value,
    ) -> std::result::Result<MutationCounts, PayloadError> {
        let rows = payload
            .get("rows")
            .and_then(Value::as_array)
            .ok_or_else(|| PayloadError("StationOverview payload lacks a `rows` array".into()))?;
        let mut counts = MutationCounts::default();
        for row in rows {
            let serial = required_str(row, "serial_number")?;
            let charger = charger_id(serial)?;
            let location = row
                .get("address")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string();
            let manufacturer = row
                .get("manufacturer")
                .and_then(Value::as_str)
                .unwrap_or_default();
            let meta = self.metadata_with(&charger, serial, location, manufacturer);
            let created = self
                .store
                .upsert_charger(&meta, item.extracted_at, true)
                .map_err(storage_to_payload)?;
            counts.chargers_created += u64::from(created);

            let status_str = required_str(row, "status")?;
            let status = match ChargerStatus::from_source(status_str) {
                Some(status) => status,
                None => {
                    counts.unrecognized_statuses += 1;
                    ChargerStatus::Unknown
                }
            };
            self.append_sample(&charger, item.extracted_at, status)?;
            counts.samples_appended += 1;
        }
        Ok(counts)
    }

    fn apply_charger_event(
        &mut self,
        _item: &RawDataItem,
        payload: &Value,
    ) -> std::result::Result<MutationCounts, PayloadError> {
        let serial = required_str(payload, "serial_number")?;
        let charger = charger_id(serial)?;
        let at = required_timestamp(payload, "timestamp_utc")?;
        let name = required_str(payload, "event_name")?;
        if name.is_empty() {
            return Err(PayloadError("event_name must be nonempty".into()));
        }

        let mut counts = MutationCounts::default();
        let meta = self.metadata(&charger, serial, String::new());
        counts.chargers_created += u64::from(
            self.store
                .upsert_charger(&meta, at, false)
                .map_err(storage_to_payload)?,
        );

        let category = self.rules.classify(name);
        if category == EventCategory::Fault {
            let record = FaultRecord::new(charger.clone(), at, name)
                .map_err(|e| PayloadError(e.to_string()))?;
            self.store.add_fault(&record).map_err(storage_to_payload)?;
            counts.faults_appended += 1;
        }
        let current = self.current_status(&charger)?;
        let next = next_status(current, category);
        if next != current {
            self.append_sample(&charger, at, next)?;
            counts.samples_appended += 1;
        }
        Ok(counts)
    }

    fn apply_charging_session(
        &mut self,
        payload: &Value,
    ) -> std::result::Result<MutationCounts, PayloadError> {
        let serial = required_str(payload, "serial_number")?;
        let charger = charger_id(serial)?;
        let start = required_timestamp(payload, "start_utc")?;
        let end = required_timestamp(payload, "end_utc")?;
        let energy: f64 = required_str(payload, "energy_kwh")?
            .trim()
            .parse()
            .map_err(|e| PayloadError(format!("bad energy_kwh: {e}")))?;
        let session = ChargingSession::new(charger.clone(), start, end, energy)
            .map_err(|e| PayloadError(e.to_string()))?;

        let mut counts = MutationCounts::default();
        let meta = self.metadata(&charger, serial, String::new());
        counts.chargers_created += u64::from(
            self.store
                .upsert_charger(&meta, start, false)
                .map_err(storage_to_payload)?,
        );
        self.store
            .add_session(&session)
            .map_err(storage_to_payload)?;
        counts.sessions_inserted += 1;
        Ok(counts)
    }

    fn apply_session_edge(
        &mut self,
        payload: &Value,
        status: ChargerStatus,
    ) -> std::result::Result<MutationCounts, PayloadError> {
        let serial = required_str(payload, "serial_number")?;
        let charger = charger_id(serial)?;
        let at = required_timestamp(payload, "at_utc")?;

        let mut counts = MutationCounts::default();
        let meta = self.metadata(&charger, serial, String::new());
        counts.chargers_created += u64::from(
            self.store
                .upsert_charger(&meta, at, false)
                .map_err(storage_to_payload)?,
        );
        self.append_sample(&charger, at, status)?;
        counts.samples_appended += 1;
        Ok(counts)
    }

    fn metadata(&self, charger: &ChargerId, serial: &str, location: String) -> ChargerMetadata {
        self.metadata_with(charger, serial, location, "")
    }

    fn metadata_with(
        &self,
        charger: &ChargerId,
        serial: &str,
        location: String,
        manufacturer: &str,
    ) -> ChargerMetadata {
        ChargerMetadata {
            id: charger.clone(),
            manufacturer: if manufacturer.is_empty() {
                self.manufacturer_default.clone()
            } else {
                manufacturer.to_string()
            },
            serial_number: serial.to_string(),
            location,
            model: None,
            power_rating_kw: None,
            install_date: None,
        }
    }

    /// Status of the latest sample (by timestamp, then insertion order) for
    /// the charger; `unknown` when it has never been observed.
    fn current_status(&mut self, charger: &ChargerId) -> std::result::Result<ChargerStatus, PayloadError> {
        if let Some((_, _, status)) = self.current.get(charger) {
            return Ok(*status);
        }
        let latest = self
            .store
            .latest_sample(charger)
            .map_err(storage_to_payload)?;
        Ok(match latest {
            Some((at, id, status)) => {
                self.current.insert(charger.clone(), (at, id, status));
                status
            }
            None => ChargerStatus::Unknown,
        })
    }

    fn append_sample(
        &mut self,
        charger: &ChargerId,
        at: Timestamp,
        status: ChargerStatus,
    ) -> std::result::Result<(), PayloadError> {
        // Prime the cache before inserting so the comparison below sees the
        // true pre-insert latest sample.
        self.current_status(charger)?;
        let sample = StatusSample {
            charger: charger.clone(),
            at,
            status,
        };
        let id = self
            .store
            .add_status_sample(&sample)
            .map_err(storage_to_payload)?;
        let candidate = (at, id, status);
        match self.current.get_mut(charger) {
            Some(existing) => {
                if (candidate.0, candidate.1) > (existing.0, existing.1) {
                    *existing = candidate;
                }
            }
            None => {
                self.current.insert(charger.clone(), candidate);
            }
        }
        Ok(())
    }
}

struct PayloadError(String);

fn storage_to_payload(e: Error) -> PayloadError {
    PayloadError(e.to_string())
}

fn charger_id(serial: &str) -> std::result::Result<ChargerId, PayloadError> {
    ChargerId::new(serial).map_err(|e| PayloadError(e.to_string()))
}

fn required_str<'v>(payload: &'v Value, key: &str) -> std::result::Result<&'v str, PayloadError> {
    payload
        .get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| PayloadError(format!("missing or non-string field `{key}`")))
}

fn required_timestamp(payload: &Value, key: &str) -> std::result::Result<Timestamp, PayloadError> {
    let secs = payload
        .get(key)
        .and_then(Value::as_i64)
        .ok_or_else(|| PayloadError(format!("missing or non-integer field `{key}`")))?;
    Timestamp::from_unix(secs).map_err(|e| PayloadError(e.to_string()))
}
