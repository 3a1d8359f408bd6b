//! Normalized charger information model persistence: charger metadata,
//! status samples, faults, sessions, applied-item digests, quarantine
//! records, and computed metric rows.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rusqlite::params;

use crate::error::Result;
use crate::model::{
    ChargerId, ChargerMetadata, ChargerStatus, ChargingSession, FaultRecord, MetricsRow,
    PeriodWindow, StatusSample, Timestamp,
};
use crate::rawstore::{bad_column, ts_col, RawId, RawItemType};
use crate::store::Store;
use crate::timeline::Granularity;

/// Activity signals per charger, used by the site-report activity rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChargerActivity {
    pub charger: ChargerId,
    /// Earliest non-unknown status observation, if any.
    pub first_active_at: Option<Timestamp>,
    /// Latest appearance in a station overview, if any.
    pub last_overview_at: Option<Timestamp>,
}

impl Store {
    /// Creates the charger if its id is unseen; existing rows keep their
    /// metadata except that overview sightings refresh location and the
    /// last-overview timestamp. Returns whether a row was created.
    pub fn upsert_charger(
        &self,
        meta: &ChargerMetadata,
        seen_at: Timestamp,
        via_overview: bool,
    ) -> Result<bool> {
        meta.validate()?;
        let created = self.conn().execute(
            "INSERT OR IGNORE INTO chargers
             (charger_id, manufacturer, serial_number, location, model,
              power_rating_kw, install_date, first_seen_at, last_overview_at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)",
            params![
                meta.id.as_str(),
                meta.manufacturer,
                meta.serial_number,
                meta.location,
                meta.model,
                meta.power_rating_kw,
                meta.install_date.map(|d| d.to_string()),
                seen_at.as_secs(),
                via_overview.then(|| seen_at.as_secs()),
            ],
        )? > 0;
        if via_overview && !created {
            self.conn().execute(
                "UPDATE chargers SET
                   last_overview_at = MAX(COALESCE(last_overview_at, -1), ?2),
                   location = CASE WHEN ?3 != '' THEN ?3 ELSE location END
                 WHERE charger_id = ?1",
                params![meta.id.as_str(), seen_at.as_secs(), meta.location],
            )?;
        }
        Ok(created)
    }

    /// Appends a status sample and returns its insertion id. Non-unknown
    /// samples refresh the charger's first-active time.
    pub fn add_status_sample(&self, sample: &StatusSample) -> Result<i64> {
        self.conn().execute(
            "INSERT INTO status_samples (charger_id, at, status) VALUES (?1, ?2, ?3)",
            params![
                sample.charger.as_str(),
                sample.at.as_secs(),
                sample.status.as_str(),
            ],
        )?;
        let id = self.conn().last_insert_rowid();
        if sample.status != ChargerStatus::Unknown {
            self.conn().execute(
                "UPDATE chargers SET first_active_at = CASE
                   WHEN first_active_at IS NULL OR first_active_at > ?2 THEN ?2
                   ELSE first_active_at END
                 WHERE charger_id = ?1",
                params![sample.charger.as_str(), sample.at.as_secs()],
            )?;
        }
        Ok(id)
    }

    pub fn add_fault(&self, fault: &FaultRecord) -> Result<()> {
        self.conn().execute(
            "INSERT INTO faults (charger_id, at, reason) VALUES (?1, ?2, ?3)",
            params![fault.charger.as_str(), fault.at.as_secs(), fault.reason],
        )?;
        Ok(())
    }

    pub fn add_session(&self, session: &ChargingSession) -> Result<()> {
        self.conn().execute(
            "INSERT INTO sessions (charger_id, start_at, end_at, energy_kwh)
             VALUES (?1, ?2, ?3, ?4)",
            params![
                session.charger.as_str(),
                session.start.as_secs(),
                session.end.as_secs(),
                session.energy_kwh,
            ],
        )?;
        Ok(())
    }

    /// Latest sample for the charger by (timestamp, insertion id).
    pub fn latest_sample(
        &self,
        charger: &ChargerId,
    ) -> Result<Option<(Timestamp, i64, ChargerStatus)>> {
        let mut stmt = self.conn().prepare_cached(
            "SELECT at, sample_id, status FROM status_samples
             WHERE charger_id = ?1
             ORDER BY at DESC, sample_id DESC LIMIT 1",
        )?;
        let row = stmt
            .query_row([charger.as_str()], |row| {
                let at: i64 = row.get(0)?;
                let id: i64 = row.get(1)?;
                let status: String = row.get(2)?;
                Ok((
                    ts_col(at, 0)?,
                    id,
                    parse_status(&status, 2)?,
                ))
            })
            .map(Some)
            .or_else(|e| match e {
                rusqlite::Error::QueryReturnedNoRows => Ok(None),
                other => Err(other),
            })?;
        Ok(row)
    }

    /// All samples for a charger in (timestamp, insertion id) order.
    pub fn samples_for(&self, charger: &ChargerId) -> Result<Vec<StatusSample>> {
        let mut stmt = self.conn().prepare_cached(
            "SELECT at, status FROM status_samples
             WHERE charger_id = ?1 ORDER BY at ASC, sample_id ASC",
        )?;
        let rows = stmt.query_map([charger.as_str()], |row| {
            let at: i64 = row.get(0)?;
            let status: String = row.get(1)?;
            Ok(StatusSample {
                charger: charger.clone(),
                at: ts_col(at, 0)?,
                status: parse_status(&status, 1)?,
            })
        })?;
        collect(rows)
    }

    /// All fault records for a charger in (timestamp, insertion id) order.
    pub fn faults_for(&self, charger: &ChargerId) -> Result<Vec<FaultRecord>> {
        let mut stmt = self.conn().prepare_cached(
            "SELECT at, reason FROM faults
             WHERE charger_id = ?1 ORDER BY at ASC, fault_id ASC",
        )?;
        let rows = stmt.query_map([charger.as_str()], |row| {
            let at: i64 = row.get(0)?;
            Ok(FaultRecord {
                charger: charger.clone(),
                at: ts_col(at, 0)?,
                reason: row.get(1)?,
            })
        })?;
        collect(rows)
    }

    /// All known chargers, ordered by id.
    pub fn chargers(&self) -> Result<Vec<ChargerMetadata>> {
        let mut stmt = self.conn().prepare_cached(
            "SELECT charger_id, manufacturer, serial_number, location, model,
                    power_rating_kw, install_date
             FROM chargers ORDER BY charger_id ASC",
        )?;
        let rows = stmt.query_map([], |row| {
            let id: String = row.get(0)?;
            let install_date: Option<String> = row.get(6)?;
            Ok(ChargerMetadata {
                id: ChargerId::new(id).map_err(|e| bad_column(0, e.to_string()))?,
                manufacturer: row.get(1)?,
                serial_number: row.get(2)?,
                location: row.get(3)?,
                model: row.get(4)?,
                power_rating_kw: row.get(5)?,
                install_date: install_date
                    .map(|s| {
                        s.parse::<NaiveDate>()
                            .map_err(|e| bad_column(6, e.to_string()))
                    })
                    .transpose()?,
            })
        })?;
        collect(rows)
    }

    pub fn charger_activity(&self) -> Result<Vec<ChargerActivity>> {
        let mut stmt = self.conn().prepare_cached(
            "SELECT charger_id, first_active_at, last_overview_at
             FROM chargers ORDER BY charger_id ASC",
        )?;
        let rows = stmt.query_map([], |row| {
            let id: String = row.get(0)?;
            let first: Option<i64> = row.get(1)?;
            let last: Option<i64> = row.get(2)?;
            Ok(ChargerActivity {
                charger: ChargerId::new(id).map_err(|e| bad_column(0, e.to_string()))?,
                first_active_at: first.map(|v| ts_col(v, 1)).transpose()?,
                last_overview_at: last.map(|v| ts_col(v, 2)).transpose()?,
            })
        })?;
        collect(rows)
    }

    pub fn session_count(&self) -> Result<u64> {
        let n: i64 = self
            .conn()
            .query_row("SELECT COUNT(*) FROM sessions", [], |row| row.get(0))?;
        Ok(n as u64)
    }

    pub fn sample_count(&self) -> Result<u64> {
        let n: i64 = self
            .conn()
            .query_row("SELECT COUNT(*) FROM status_samples", [], |row| row.get(0))?;
        Ok(n as u64)
    }

    // -- normalization bookkeeping ------------------------------------------

    pub fn is_applied(&self, digest: &str) -> Result<bool> {
        let mut stmt = self
            .conn()
            .prepare_cached("SELECT 1 FROM applied_items WHERE digest = ?1")?;
        let found = stmt
            .query_row([digest], |_| Ok(()))
            .map(|_| true)
            .or_else(|e| match e {
                rusqlite::Error::QueryReturnedNoRows => Ok(false),
                other => Err(other),
            })?;
        Ok(found)
    }

    pub fn record_applied(&self, digest: &str, raw_id: RawId) -> Result<()> {
        self.conn().execute(
            "INSERT OR IGNORE INTO applied_items (digest, raw_id) VALUES (?1, ?2)",
            params![digest, raw_id],
        )?;
        Ok(())
    }

    pub fn quarantine_item(
        &self,
        raw_id: RawId,
        item_type: RawItemType,
        error: &str,
    ) -> Result<()> {
        self.conn().execute(
            "INSERT OR REPLACE INTO quarantine (raw_id, item_type, error)
             VALUES (?1, ?2, ?3)",
            params![raw_id, item_type.as_str(), error],
        )?;
        Ok(())
    }

    pub fn quarantine_count(&self) -> Result<u64> {
        let n: i64 = self
            .conn()
            .query_row("SELECT COUNT(*) FROM quarantine", [], |row| row.get(0))?;
        Ok(n as u64)
    }

    // -- computed metrics ----------------------------------------------------

    /// Persists metric rows under a granularity key, replacing any previous
    /// rows for the same (charger, granularity, window label).
    pub fn save_metrics_rows(&self, granularity: Granularity, rows: &[MetricsRow]) -> Result<()> {
        let mut stmt = self.conn().prepare_cached(
            "INSERT OR REPLACE INTO metrics_rows
             (charger_id, granularity, window_label, window_start, window_end,
              uptime_pct, fault_time_pct, unreachable_time_pct,
              unavailable_time_pct, unknown_time_pct, fault_reason_json)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11)",
        )?;
        for row in rows {
            stmt.execute(params![
                row.charger.as_str(),
                granularity.as_str(),
                row.window.label,
                row.window.start.as_secs(),
                row.window.end.as_secs(),
                row.uptime_pct,
                row.fault_time_pct,
                row.unreachable_time_pct,
                row.unavailable_time_pct,
                row.unknown_time_pct,
                serde_json::to_string(&row.fault_reason_pct)
                    .expect("reason map serializes"),
            ])?;
        }
        Ok(())
    }

    /// Loads metric rows for a granularity whose windows fall inside the
    /// range, ordered by (window start, charger).
    pub fn load_metrics_rows(
        &self,
        granularity: Granularity,
        range: (Timestamp, Timestamp),
    ) -> Result<Vec<MetricsRow>> {
        let mut stmt = self.conn().prepare_cached(
            "SELECT charger_id, window_label, window_start, window_end,
                    uptime_pct, fault_time_pct, unreachable_time_pct,
                    unavailable_time_pct, unknown_time_pct, fault_reason_json
             FROM metrics_rows
             WHERE granularity = ?1 AND window_start >= ?2 AND window_end <= ?3
             ORDER BY window_start ASC, charger_id ASC",
        )?;
        let rows = stmt.query_map(
            params![granularity.as_str(), range.0.as_secs(), range.1.as_secs()],
            |row| {
                let charger: String = row.get(0)?;
                let label: String = row.get(1)?;
                let start: i64 = row.get(2)?;
                let end: i64 = row.get(3)?;
                let reasons: String = row.get(9)?;
                let fault_reason_pct: BTreeMap<String, f64> = serde_json::from_str(&reasons)
                    .map_err(|e| bad_column(9, e.to_string()))?;
                Ok(MetricsRow {
                    charger: ChargerId::new(charger)
                        .map_err(|e| bad_column(0, e.to_string()))?,
                    window: PeriodWindow {
                        start: ts_col(start, 2)?,
                        end: ts_col(end, 3)?,
                        label,
                    },
                    uptime_pct: row.get(4)?,
                    fault_time_pct: row.get(5)?,
                    unreachable_time_pct: row.get(6)?,
                    unavailable_time_pct: row.get(7)?,
                    unknown_time_pct: row.get(8)?,
                    fault_reason_pct,
                })
            },
        )?;
        collect(rows)
    }
}

fn parse_status(s: &str, column: usize) -> rusqlite::Result<ChargerStatus> {
    ChargerStatus::parse(s).ok_or_else(|| bad_column(column, format!("unknown status `{s}`")))
}

fn collect<T>(rows: impl Iterator<Item = rusqlite::Result<T>>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for row in rows {
        out.push(row?);
    }
    Ok(out)
}
