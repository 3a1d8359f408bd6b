//! Integration adapters that turn source-system exports into raw data items.
//!
//! The reference adapter reads dashboard-export CSV files. Three schemas are
//! recognized by their headers:
//!
//! ```text
//! overview.csv: serial_number,address,latitude,longitude,status
//! events.csv:   serial_number,timestamp,event_name
//! sessions.csv: serial_number,start_timestamp,end_timestamp,energy_kwh
//! ```
//!
//! Extra columns are carried into the payloads verbatim; normalization, not
//! extraction, decides relevance. Malformed rows are rejected individually
//! and extraction continues; a missing required column fails the file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::model::Timestamp;
use crate::rawstore::{NewRawItem, RawItemType};

/// Identity and settings of an integration adapter instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdapterDescriptor {
    pub name: String,
    pub version: String,
    pub supported_item_types: BTreeSet<RawItemType>,
    pub settings: BTreeMap<String, String>,
}

/// A rejected source row; extraction carries on past it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowReject {
    pub file: PathBuf,
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowReject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.file.display(), self.line, self.message)
    }
}

/// Everything one extraction pass produced.
#[derive(Debug, Default)]
pub struct Extraction {
    pub items: Vec<NewRawItem>,
    pub rejects: Vec<RowReject>,
}

/// An integration adapter: extracts raw data items from a source system.
pub trait Adapter {
    fn descriptor(&self) -> &AdapterDescriptor;
    fn extract(&self, input_paths: &[PathBuf]) -> Result<Extraction>;
}

/// One parsed status-overview row: summary information for one charger at
/// extraction time. Only the current status is available from the source;
/// history is reconstructed from events.
#[derive(Clone, Debug, PartialEq)]
pub struct StatusOverviewRow {
    pub serial_number: String,
    pub address: String,
    pub latitude: f64,
    pub longitude: f64,
    pub current_status: String,
}

impl StatusOverviewRow {
    fn from_row(row: &ParsedRow<'_>) -> std::result::Result<Self, String> {
        Ok(StatusOverviewRow {
            serial_number: row.nonempty("serial_number")?.to_string(),
            address: row.get("address")?.to_string(),
            latitude: parse_coordinate(row.get("latitude")?, "latitude", 90.0)?,
            longitude: parse_coordinate(row.get("longitude")?, "longitude", 180.0)?,
            current_status: row.nonempty("status")?.to_string(),
        })
    }
}

/// The recognized export file schemas.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportSchema {
    Overview,
    Events,
    Sessions,
}

impl ExportSchema {
    pub fn required_columns(self) -> &'static [&'static str] {
        match self {
            ExportSchema::Overview => {
                &["serial_number", "address", "latitude", "longitude", "status"]
            }
            ExportSchema::Events => &["serial_number", "timestamp", "event_name"],
            ExportSchema::Sessions => {
                &["serial_number", "start_timestamp", "end_timestamp", "energy_kwh"]
            }
        }
    }

    fn all() -> [ExportSchema; 3] {
        [ExportSchema::Overview, ExportSchema::Events, ExportSchema::Sessions]
    }
}

/// Picks the schema whose required columns are all present. Ambiguity (a
/// header satisfying more than one schema) is unrecognized.
pub fn detect_schema(headers: &[String]) -> Option<ExportSchema> {
    let set: BTreeSet<&str> = headers.iter().map(String::as_str).collect();
    let mut matches = ExportSchema::all()
        .into_iter()
        .filter(|s| s.required_columns().iter().all(|c| set.contains(c)));
    match (matches.next(), matches.next()) {
        (Some(schema), None) => Some(schema),
        _ => None,
    }
}

/// One row-level violation found by [`validate_export`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowViolation {
    pub line: u64,
    pub message: String,
}

/// Result of validating an export file against a schema. Never mutates
/// anything.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    pub file: PathBuf,
    pub schema: ExportSchema,
    pub missing_columns: Vec<String>,
    pub row_violations: Vec<RowViolation>,
    pub row_count: u64,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.missing_columns.is_empty() && self.row_violations.is_empty()
    }
}

/// Checks an export file against an expected schema: reports missing
/// columns, per-row violations, and the row count.
pub fn validate_export(path: &Path, schema: ExportSchema) -> Result<ValidationReport> {
    let mut reader = open_csv(path)?;
    let headers = header_row(&mut reader, path)?;
    let present: BTreeSet<&str> = headers.iter().map(String::as_str).collect();
    let missing_columns: Vec<String> = schema
        .required_columns()
        .iter()
        .filter(|c| !present.contains(**c))
        .map(|c| c.to_string())
        .collect();

    let mut report = ValidationReport {
        file: path.to_path_buf(),
        schema,
        missing_columns,
        row_violations: Vec::new(),
        row_count: 0,
    };
    if !report.missing_columns.is_empty() {
        return Ok(report);
    }

    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                report.row_violations.push(RowViolation {
                    line: e.position().map_or(0, |p| p.line()),
                    message: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        report.row_count += 1;
        let line = record.position().map_or(0, |p| p.line());
        let row = ParsedRow::new(&headers, &record);
        if let Err(message) = check_row(&row, schema) {
            report.row_violations.push(RowViolation { line, message });
        }
    }
    Ok(report)
}

/// Reference adapter for dashboard-export CSV files.
///
/// Settings:
/// - `extracted_at`: RFC 3339 instant to stamp extractions with (defaults to
///   the current time; set it for reproducible pipelines)
/// - `manufacturer`: manufacturer stamped into overview payload rows that
///   lack a manufacturer column
pub struct ExportAdapter {
    descriptor: AdapterDescriptor,
    extracted_at_override: Option<Timestamp>,
    manufacturer: Option<String>,
}

impl ExportAdapter {
    pub const NAME: &'static str = "export";

    pub fn from_settings(settings: &BTreeMap<String, String>) -> Result<Self> {
        let extracted_at_override = settings
            .get("extracted_at")
            .map(|s| Timestamp::parse_rfc3339(s))
            .transpose()
            .map_err(|e| Error::Config(format!("bad `extracted_at` setting: {e}")))?;
        Ok(ExportAdapter {
            descriptor: AdapterDescriptor {
                name: Self::NAME.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                supported_item_types: RawItemType::ALL.into_iter().collect(),
                settings: settings.clone(),
            },
            extracted_at_override,
            manufacturer: settings.get("manufacturer").cloned(),
        })
    }

    fn extracted_at(&self) -> Timestamp {
        self.extracted_at_override.unwrap_or_else(Timestamp::now)
    }

    fn extract_file(&self, path: &Path, out: &mut Extraction) -> Result<()> {
        let mut reader = open_csv(path)?;
        let headers = header_row(&mut reader, path)?;
        let schema = detect_schema(&headers).ok_or_else(|| Error::UnrecognizedSchema {
            file: path.to_path_buf(),
            headers: headers.join(","),
        })?;
        let extracted_at = self.extracted_at();

        let mut overview_rows: Vec<Value> = Vec::new();
        for record in reader.records() {
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    out.rejects.push(RowReject {
                        file: path.to_path_buf(),
                        line: e.position().map_or(0, |p| p.line()),
                        message: format!("unreadable row: {e}"),
                    });
                    continue;
                }
            };
            let line = record.position().map_or(0, |p| p.line());
            let row = ParsedRow::new(&headers, &record);
            match extract_row(&row, schema, extracted_at, &mut overview_rows, &mut out.items) {
                Ok(()) => {}
                Err(message) => out.rejects.push(RowReject {
                    file: path.to_path_buf(),
                    line,
                    message,
                }),
            }
        }

        if schema == ExportSchema::Overview {
            if let Some(manufacturer) = &self.manufacturer {
                for row in &mut overview_rows {
                    if let Value::Object(map) = row {
                        map.entry("manufacturer")
                            .or_insert_with(|| Value::String(manufacturer.clone()));
                    }
                }
            }
            // all rows of one overview file bundle into a single item
            out.items.push(NewRawItem::new(
                extracted_at,
                RawItemType::StationOverview,
                Some(extracted_at),
                &json!({ "rows": overview_rows }),
            ));
        }
        Ok(())
    }
}

impl Adapter for ExportAdapter {
    fn descriptor(&self) -> &AdapterDescriptor {
        &self.descriptor
    }

    fn extract(&self, input_paths: &[PathBuf]) -> Result<Extraction> {
        let mut out = Extraction::default();
        for path in input_paths {
            self.extract_file(path, &mut out)?;
        }
        Ok(out)
    }
}

struct ParsedRow<'a> {
    headers: &'a [String],
    record: &'a csv::StringRecord,
}

impl<'a> ParsedRow<'a> {
    fn new(headers: &'a [String], record: &'a csv::StringRecord) -> Self {
        ParsedRow { headers, record }
    }

    fn get(&self, column: &str) -> std::result::Result<&'a str, String> {
        let idx = self
            .headers
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| format!("missing column `{column}`"))?;
        self.record
            .get(idx)
            .ok_or_else(|| format!("row is short of the `{column}` column"))
    }

    fn nonempty(&self, column: &str) -> std::result::Result<&'a str, String> {
        let v = self.get(column)?;
        if v.trim().is_empty() {
            return Err(format!("empty `{column}`"));
        }
        Ok(v)
    }

    /// All columns of the row, verbatim, as a sorted JSON object.
    fn verbatim(&self) -> Map<String, Value> {
        let mut map = Map::new();
        for (header, value) in self.headers.iter().zip(self.record.iter()) {
            map.insert(header.clone(), Value::String(value.to_string()));
        }
        map
    }
}

fn parse_coordinate(value: &str, column: &str, bound: f64) -> std::result::Result<f64, String> {
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|e| format!("bad `{column}`: {e}"))?;
    if !(-bound..=bound).contains(&v) {
        return Err(format!("`{column}` {v} out of range [-{bound}, {bound}]"));
    }
    Ok(v)
}

fn parse_row_timestamp(value: &str, column: &str) -> std::result::Result<Timestamp, String> {
    Timestamp::parse_rfc3339(value.trim()).map_err(|e| format!("bad `{column}`: {e}"))
}

/// Shared row validation: extraction rejects exactly what validation flags.
fn check_row(row: &ParsedRow<'_>, schema: ExportSchema) -> std::result::Result<(), String> {
    // a row wider or narrower than the header cannot be mapped to columns
    // faithfully
    if row.record.len() != row.headers.len() {
        return Err(format!(
            "row has {} fields, header has {}",
            row.record.len(),
            row.headers.len()
        ));
    }
    match schema {
        ExportSchema::Overview => {
            StatusOverviewRow::from_row(row)?;
            Ok(())
        }
        ExportSchema::Events => {
            row.nonempty("serial_number")?;
            parse_row_timestamp(row.get("timestamp")?, "timestamp")?;
            row.nonempty("event_name")?;
            Ok(())
        }
        ExportSchema::Sessions => {
            row.nonempty("serial_number")?;
            let start = parse_row_timestamp(row.get("start_timestamp")?, "start_timestamp")?;
            let end = parse_row_timestamp(row.get("end_timestamp")?, "end_timestamp")?;
            if end < start {
                return Err("negative session duration".into());
            }
            let energy: f64 = row
                .get("energy_kwh")?
                .trim()
                .parse()
                .map_err(|e| format!("bad `energy_kwh`: {e}"))?;
            if !energy.is_finite() || energy < 0.0 {
                return Err(format!("negative energy_kwh {energy}"));
            }
            Ok(())
        }
    }
}

fn extract_row(
    row: &ParsedRow<'_>,
    schema: ExportSchema,
    extracted_at: Timestamp,
    overview_rows: &mut Vec<Value>,
    items: &mut Vec<NewRawItem>,
) -> std::result::Result<(), String> {
    check_row(row, schema)?;
    match schema {
        ExportSchema::Overview => {
            overview_rows.push(Value::Object(row.verbatim()));
        }
        ExportSchema::Events => {
            let at = parse_row_timestamp(row.get("timestamp")?, "timestamp")?;
            let mut payload = row.verbatim();
            payload.insert("timestamp_utc".into(), json!(at.as_secs()));
            items.push(NewRawItem::new(
                extracted_at,
                RawItemType::ChargerEvent,
                Some(at),
                &Value::Object(payload),
            ));
        }
        ExportSchema::Sessions => {
            let serial = row.nonempty("serial_number")?;
            let start = parse_row_timestamp(row.get("start_timestamp")?, "start_timestamp")?;
            let end = parse_row_timestamp(row.get("end_timestamp")?, "end_timestamp")?;
            let mut payload = row.verbatim();
            payload.insert("start_utc".into(), json!(start.as_secs()));
            payload.insert("end_utc".into(), json!(end.as_secs()));
            items.push(NewRawItem::new(
                extracted_at,
                RawItemType::ChargingSession,
                Some(start),
                &Value::Object(payload),
            ));
            items.push(NewRawItem::new(
                extracted_at,
                RawItemType::ChargingSessionStart,
                Some(start),
                &json!({ "serial_number": serial, "at_utc": start.as_secs() }),
            ));
            items.push(NewRawItem::new(
                extracted_at,
                RawItemType::ChargingSessionEnd,
                Some(end),
                &json!({ "serial_number": serial, "at_utc": end.as_secs() }),
            ));
        }
    }
    Ok(())
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                if let csv::ErrorKind::Io(io) = e.into_kind() {
                    Error::io(path, io)
                } else {
                    unreachable!()
                }
            }
            _ => Error::Csv {
                path: path.to_path_buf(),
                source: e,
            },
        })
}

fn header_row(reader: &mut csv::Reader<std::fs::File>, path: &Path) -> Result<Vec<String>> {
    let headers = reader.headers().map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(headers.iter().map(|h| h.trim().to_string()).collect())
}
