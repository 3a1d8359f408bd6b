//! Append-only raw data items and their processing queue.
//!
//! Every record an adapter extracts lands here before normalization, in the
//! shape the adapter chose, so the store doubles as a complete historical
//! record of source data. Items are never deleted; normalization flips
//! `processed` exactly once (unless an operator resets the queue).

use rusqlite::params;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::Timestamp;
use crate::store::Store;

pub type RawId = i64;

/// The closed set of raw item types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RawItemType {
    StationOverview,
    ChargerEvent,
    ChargingSession,
    ChargingSessionStart,
    ChargingSessionEnd,
}

impl RawItemType {
    pub const ALL: [RawItemType; 5] = [
        RawItemType::StationOverview,
        RawItemType::ChargerEvent,
        RawItemType::ChargingSession,
        RawItemType::ChargingSessionStart,
        RawItemType::ChargingSessionEnd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RawItemType::StationOverview => "StationOverview",
            RawItemType::ChargerEvent => "ChargerEvent",
            RawItemType::ChargingSession => "ChargingSession",
            RawItemType::ChargingSessionStart => "ChargingSessionStart",
            RawItemType::ChargingSessionEnd => "ChargingSessionEnd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

/// A raw item ready to be stored (the store assigns the id).
#[derive(Clone, Debug, PartialEq)]
pub struct NewRawItem {
    pub extracted_at: Timestamp,
    pub item_type: RawItemType,
    /// Event occurrence time embedded in the payload, when the adapter knows
    /// one. Drives chronological queue order; extraction order is not
    /// occurrence order for historical backfills.
    pub event_at: Option<Timestamp>,
    /// Canonical JSON text (object keys sorted).
    pub payload: String,
}

impl NewRawItem {
    pub fn new(
        extracted_at: Timestamp,
        item_type: RawItemType,
        event_at: Option<Timestamp>,
        payload: &serde_json::Value,
    ) -> Self {
        NewRawItem {
            extracted_at,
            item_type,
            event_at,
            // serde_json maps are sorted by key, so this is canonical
            payload: payload.to_string(),
        }
    }
}

/// A stored raw item.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataItem {
    pub raw_id: RawId,
    pub extracted_at: Timestamp,
    pub processed: bool,
    pub item_type: RawItemType,
    pub event_at: Option<Timestamp>,
    pub payload: String,
}

impl RawDataItem {
    /// Content digest used as the normalization idempotence key:
    /// re-ingested duplicates share it, so they apply at most once.
    pub fn digest(&self) -> String {
        item_digest(self.item_type, &self.payload)
    }
}

pub fn item_digest(item_type: RawItemType, payload: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(item_type.as_str().as_bytes());
    hasher.update(b"\n");
    hasher.update(payload.as_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(digest.len() * 2);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

impl Store {
    /// Persists a raw item with `processed = false` and returns its id.
    /// Ids are strictly increasing and never reused.
    pub fn store_raw(&self, item: &NewRawItem) -> Result<RawId> {
        self.conn().execute(
            "INSERT INTO raw_items (extracted_at, processed, item_type, event_at, payload)
             VALUES (?1, 0, ?2, ?3, ?4)",
            params![
                item.extracted_at.as_secs(),
                item.item_type.as_str(),
                item.event_at.map(Timestamp::as_secs),
                item.payload,
            ],
        )?;
        Ok(self.conn().last_insert_rowid())
    }

    /// Up to `limit` unprocessed items in chronological order: by the
    /// payload's event timestamp when present, else extraction time, with
    /// ties broken by id.
    pub fn fetch_unprocessed(&self, limit: usize) -> Result<Vec<RawDataItem>> {
        let mut stmt = self.conn().prepare_cached(
            "SELECT raw_id, extracted_at, processed, item_type, event_at, payload
             FROM raw_items
             WHERE processed = 0
             ORDER BY COALESCE(event_at, extracted_at) ASC, raw_id ASC
             LIMIT ?1",
        )?;
        let rows = stmt.query_map([limit as i64], |row| {
            let item_type: String = row.get(3)?;
            let extracted_at: i64 = row.get(1)?;
            let event_at: Option<i64> = row.get(4)?;
            Ok(RawDataItem {
                raw_id: row.get(0)?,
                extracted_at: ts_col(extracted_at, 1)?,
                processed: row.get::<_, i64>(2)? != 0,
                item_type: RawItemType::parse(&item_type).ok_or_else(|| {
                    bad_column(3, format!("unknown raw item type `{item_type}`"))
                })?,
                event_at: event_at.map(|v| ts_col(v, 4)).transpose()?,
                payload: row.get(5)?,
            })
        })?;
        let mut items = Vec::new();
        for row in rows {
            items.push(row?);
        }
        Ok(items)
    }

    /// Marks an item processed. Idempotent; unknown ids are an error.
    pub fn mark_processed(&self, raw_id: RawId) -> Result<()> {
        let changed = self.conn().execute(
            "UPDATE raw_items SET processed = 1 WHERE raw_id = ?1",
            [raw_id],
        )?;
        if changed == 0 {
            let exists: bool = self
                .conn()
                .query_row(
                    "SELECT 1 FROM raw_items WHERE raw_id = ?1",
                    [raw_id],
                    |_| Ok(true),
                )
                .or_else(|e| match e {
                    rusqlite::Error::QueryReturnedNoRows => Ok(false),
                    other => Err(other),
                })?;
            if !exists {
                return Err(Error::RawItemNotFound(raw_id));
            }
        }
        Ok(())
    }

    /// Administrative reset: re-queues every raw item and clears all state
    /// derived from them (the normalized model, applied digests, quarantine
    /// records, and computed metrics). Raw items themselves are kept.
    /// Returns the number of items re-queued.
    pub fn reset_processed(&self) -> Result<u64> {
        self.begin()?;
        let result = (|| -> Result<u64> {
            let requeued = self
                .conn()
                .execute("UPDATE raw_items SET processed = 0", [])?;
            for table in [
                "applied_items",
                "quarantine",
                "chargers",
                "status_samples",
                "faults",
                "sessions",
                "metrics_rows",
            ] {
                self.conn()
                    .execute(&format!("DELETE FROM {table}"), [])?;
            }
            Ok(requeued as u64)
        })();
        match result {
            Ok(n) => {
                self.commit()?;
                Ok(n)
            }
            Err(e) => {
                let _ = self.rollback();
                Err(e)
            }
        }
    }

    pub fn raw_item_count(&self) -> Result<u64> {
        let n: i64 = self
            .conn()
            .query_row("SELECT COUNT(*) FROM raw_items", [], |row| row.get(0))?;
        Ok(n as u64)
    }

    pub fn unprocessed_count(&self) -> Result<u64> {
        let n: i64 = self.conn().query_row(
            "SELECT COUNT(*) FROM raw_items WHERE processed = 0",
            [],
            |row| row.get(0),
        )?;
        Ok(n as u64)
    }
}

pub(crate) fn ts_col(value: i64, column: usize) -> rusqlite::Result<Timestamp> {
    Timestamp::from_unix(value)
        .map_err(|e| bad_column(column, e.to_string()))
}

pub(crate) fn bad_column(column: usize, message: String) -> rusqlite::Error {
    rusqlite::Error::FromSqlConversionFailure(
        column,
        rusqlite::types::Type::Text,
        message.into(),
    )
}
