//! Single-file embedded store.
//!
//! One SQLite database holds the append-only raw data table, the normalized
//! charger information model, and computed metric rows. Keeping them in one
//! file lets a normalization step apply model mutations and mark the raw
//! item processed in a single transaction.
//!
//! Raw-data operations live in [`crate::rawstore`]; normalized-model
//! operations in [`crate::modelstore`]. One process owns the store at a
//! time via an advisory file lock; concurrent opens fail fast.

use std::fs::{File, OpenOptions, TryLockError};
use std::path::{Path, PathBuf};

use rusqlite::Connection;

use crate::error::{Error, Result};

const SCHEMA_VERSION: i64 = 1;

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS schema_version (
    version INTEGER NOT NULL
);

CREATE TABLE IF NOT EXISTS raw_items (
    raw_id       INTEGER PRIMARY KEY AUTOINCREMENT,
    extracted_at INTEGER NOT NULL,
    processed    INTEGER NOT NULL DEFAULT 0 CHECK (processed IN (0, 1)),
    item_type    TEXT NOT NULL,
    event_at     INTEGER,
    payload      TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_raw_items_queue ON raw_items (processed);

CREATE TABLE IF NOT EXISTS chargers (
    charger_id       TEXT PRIMARY KEY,
    manufacturer     TEXT NOT NULL,
    serial_number    TEXT NOT NULL,
    location         TEXT NOT NULL,
    model            TEXT,
    power_rating_kw  REAL,
    install_date     TEXT,
    first_seen_at    INTEGER NOT NULL,
    first_active_at  INTEGER,
    last_overview_at INTEGER
);

CREATE TABLE IF NOT EXISTS status_samples (
    sample_id  INTEGER PRIMARY KEY AUTOINCREMENT,
    charger_id TEXT NOT NULL,
    at         INTEGER NOT NULL,
    status     TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_samples_charger_at
    ON status_samples (charger_id, at, sample_id);

CREATE TABLE IF NOT EXISTS faults (
    fault_id   INTEGER PRIMARY KEY AUTOINCREMENT,
    charger_id TEXT NOT NULL,
    at         INTEGER NOT NULL,
    reason     TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_faults_charger_at
    ON faults (charger_id, at, fault_id);

CREATE TABLE IF NOT EXISTS sessions (
    session_id INTEGER PRIMARY KEY AUTOINCREMENT,
    charger_id TEXT NOT NULL,
    start_at   INTEGER NOT NULL,
    end_at     INTEGER NOT NULL,
    energy_kwh REAL NOT NULL
);

CREATE TABLE IF NOT EXISTS applied_items (
    digest TEXT PRIMARY KEY,
    raw_id INTEGER NOT NULL
);

CREATE TABLE IF NOT EXISTS quarantine (
    raw_id    INTEGER PRIMARY KEY,
    item_type TEXT NOT NULL,
    error     TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS metrics_rows (
    charger_id           TEXT NOT NULL,
    granularity          TEXT NOT NULL,
    window_label         TEXT NOT NULL,
    window_start         INTEGER NOT NULL,
    window_end           INTEGER NOT NULL,
    uptime_pct           REAL,
    fault_time_pct       REAL NOT NULL,
    unreachable_time_pct REAL NOT NULL,
    unavailable_time_pct REAL NOT NULL,
    unknown_time_pct     REAL NOT NULL,
    fault_reason_json    TEXT NOT NULL,
    PRIMARY KEY (charger_id, granularity, window_label)
);
";

pub struct Store {
    conn: Connection,
    // advisory lock released when the store is dropped
    _lock: Option<File>,
    path: Option<PathBuf>,
}

impl Store {
    /// Opens (creating if needed) the store at `path` and takes the
    /// exclusive advisory lock. Fails fast with [`Error::StoreLocked`] when
    /// another process holds it.
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        let lock = acquire_lock(path)?;
        let conn = Connection::open(path)?;
        init(&conn)?;
        Ok(Store {
            conn,
            _lock: Some(lock),
            path: Some(path.to_path_buf()),
        })
    }

    /// In-memory store for tests and one-shot computations.
    pub fn open_in_memory() -> Result<Self> {
        let conn = Connection::open_in_memory()?;
        init(&conn)?;
        Ok(Store {
            conn,
            _lock: None,
            path: None,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub(crate) fn conn(&self) -> &Connection {
        &self.conn
    }

    pub fn begin(&self) -> Result<()> {
        self.conn.execute_batch("BEGIN IMMEDIATE")?;
        Ok(())
    }

    pub fn commit(&self) -> Result<()> {
        self.conn.execute_batch("COMMIT")?;
        Ok(())
    }

    pub fn rollback(&self) -> Result<()> {
        self.conn.execute_batch("ROLLBACK")?;
        Ok(())
    }

    /// Nestable savepoint; pairs with [`Store::release_savepoint`] or
    /// [`Store::rollback_savepoint`].
    pub fn savepoint(&self, name: &str) -> Result<()> {
        self.conn.execute_batch(&format!("SAVEPOINT {name}"))?;
        Ok(())
    }

    pub fn release_savepoint(&self, name: &str) -> Result<()> {
        self.conn.execute_batch(&format!("RELEASE {name}"))?;
        Ok(())
    }

    /// Undoes everything since the savepoint and pops it.
    pub fn rollback_savepoint(&self, name: &str) -> Result<()> {
        self.conn
            .execute_batch(&format!("ROLLBACK TO {name}; RELEASE {name}"))?;
        Ok(())
    }
}

fn acquire_lock(db_path: &Path) -> Result<File> {
    let mut lock_path = db_path.as_os_str().to_owned();
    lock_path.push(".lock");
    let lock_path = PathBuf::from(lock_path);
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(false)
        .open(&lock_path)
        .map_err(|e| Error::io(&lock_path, e))?;
    match file.try_lock() {
        Ok(()) => Ok(file),
        Err(TryLockError::WouldBlock) => Err(Error::StoreLocked(db_path.to_path_buf())),
        Err(TryLockError::Error(e)) => Err(Error::io(&lock_path, e)),
    }
}

fn init(conn: &Connection) -> Result<()> {
    conn.execute_batch(
        "PRAGMA journal_mode = WAL;
         PRAGMA synchronous = NORMAL;
         PRAGMA foreign_keys = OFF;",
    )?;
    conn.execute_batch(SCHEMA)?;
    let version: Option<i64> = conn
        .query_row("SELECT version FROM schema_version LIMIT 1", [], |row| {
            row.get(0)
        })
        .map(Some)
        .or_else(|e| match e {
            rusqlite::Error::QueryReturnedNoRows => Ok(None),
            other => Err(other),
        })?;
    match version {
        None => {
            conn.execute(
                "INSERT INTO schema_version (version) VALUES (?1)",
                [SCHEMA_VERSION],
            )?;
        }
        Some(v) if v == SCHEMA_VERSION => {}
        Some(v) => {
            return Err(Error::Config(format!(
                "store schema version {v} is not supported (expected {SCHEMA_VERSION})"
            )));
        }
    }
    Ok(())
}
