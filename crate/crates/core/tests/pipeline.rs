//! End-to-end pipeline tests over hand-written export fixtures.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use chargestat_core::config::{Config, SourceConfig};
use chargestat_core::metrics::UptimePolicy;
use chargestat_core::model::{ChargerId, ChargerStatus, MetricsRow, Timestamp};
use chargestat_core::pipeline;
use chargestat_core::rawstore::{NewRawItem, RawItemType};
use chargestat_core::statemachine::{ApplyOutcome, ClassificationRules, Normalizer};
use chargestat_core::store::Store;
use chargestat_core::timeline::{Granularity, PeriodSpec};

fn write_file(dir: &tempfile::TempDir, name: &str, contents: &str) -> PathBuf {
    let path = dir.path().join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    path
}

fn export_config(dir: &tempfile::TempDir, extracted_at: &str, inputs: &[PathBuf]) -> Config {
    let mut config = Config::for_store(dir.path().join("store.db"));
    config.sources.push(SourceConfig {
        adapter: "export".into(),
        name: None,
        settings: BTreeMap::from([("extracted_at".to_string(), extracted_at.to_string())]),
        inputs: inputs.to_vec(),
    });
    config
}

fn ts(rfc3339: &str) -> Timestamp {
    Timestamp::parse_rfc3339(rfc3339).unwrap()
}

fn day_spec(day: &str, next: &str) -> PeriodSpec {
    PeriodSpec::new(Granularity::Daily, (ts(day), ts(next)), "UTC").unwrap()
}

fn compute_rows(store: &Store, spec: &PeriodSpec) -> Vec<MetricsRow> {
    pipeline::compute(store, spec, &UptimePolicy::default()).unwrap();
    store.load_metrics_rows(spec.granularity, spec.range).unwrap()
}

/// One charger, one day, every fixture value chosen so the metrics can be
/// checked by hand:
///   available 00:00-06:00, faulted 06:00-12:00, available 12:00-18:00,
///   occupied 18:00-19:30, available 19:30-24:00
///   up = 21600+21600+5400+16200 = 64800 s -> 75.0%, faulted 21600 s -> 25.0%
#[test]
fn end_to_end_hand_checked_day() {
    let dir = tempfile::tempdir().unwrap();
    let overview = write_file(
        &dir,
        "overview.csv",
        "serial_number,address,latitude,longitude,status\n\
         CH-001,Bay 1,37.42,-122.17,Available\n",
    );
    let events = write_file(
        &dir,
        "events.csv",
        "serial_number,timestamp,event_name\n\
         CH-001,2024-01-01T06:00:00Z,Ground Fault\n\
         CH-001,2024-01-01T12:00:00Z,Ground Fault Cleared\n",
    );
    let sessions = write_file(
        &dir,
        "sessions.csv",
        "serial_number,start_timestamp,end_timestamp,energy_kwh\n\
         CH-001,2024-01-01T18:00:00Z,2024-01-01T19:30:00Z,9.0\n",
    );
    let config = export_config(
        &dir,
        "2024-01-01T00:00:00Z",
        &[overview, events, sessions],
    );

    let store = Store::open(&config.store_path).unwrap();
    let ingest = pipeline::ingest(&store, &config, None).unwrap();
    // 1 overview + 2 events + 3 session items
    assert_eq!(ingest.items_stored, 6);
    assert!(ingest.rejects.is_empty());

    let summary = pipeline::normalize(&store, config.rules()).unwrap();
    assert_eq!(summary.processed, 6);
    assert_eq!(summary.quarantined, 0);

    let spec = day_spec("2024-01-01T00:00:00Z", "2024-01-02T00:00:00Z");
    let rows = compute_rows(&store, &spec);
    assert_eq!(rows.len(), 1);
    let row = &rows[0];
    assert_eq!(row.uptime_pct, Some(75.0));
    assert_eq!(row.fault_time_pct, 25.0);
    assert_eq!(row.unreachable_time_pct, 0.0);
    assert_eq!(row.unavailable_time_pct, 0.0);
    assert_eq!(row.unknown_time_pct, 0.0);
    assert_eq!(row.fault_reason_pct["Ground Fault"], 100.0);

    assert_eq!(store.session_count().unwrap(), 1);
    let chargers = store.chargers().unwrap();
    assert_eq!(chargers.len(), 1);
    assert_eq!(chargers[0].location, "Bay 1");
}

#[test]
fn session_start_item_emits_exactly_one_occupied_sample() {
    let store = Store::open_in_memory().unwrap();
    let item = NewRawItem::new(
        ts("2024-01-01T00:00:00Z"),
        RawItemType::ChargingSessionStart,
        Some(ts("2024-01-01T08:00:00Z")),
        &serde_json::json!({"serial_number": "CH-9", "at_utc": 1_704_096_000}),
    );
    store.store_raw(&item).unwrap();
    pipeline::normalize(&store, ClassificationRules::shipped_defaults()).unwrap();

    let samples = store.samples_for(&ChargerId::new("CH-9").unwrap()).unwrap();
    assert_eq!(samples.len(), 1);
    assert_eq!(samples[0].status, ChargerStatus::Occupied);
    assert_eq!(samples[0].at.as_secs(), 1_704_096_000);
}

#[test]
fn fault_event_appends_record_and_faulted_sample() {
    let store = Store::open_in_memory().unwrap();
    let at = ts("2024-01-01T06:00:00Z");
    let item = NewRawItem::new(
        ts("2024-01-02T00:00:00Z"),
        RawItemType::ChargerEvent,
        Some(at),
        &serde_json::json!({
            "serial_number": "CH-9",
            "event_name": "Ground Fault",
            "timestamp_utc": at.as_secs(),
        }),
    );
    store.store_raw(&item).unwrap();
    pipeline::normalize(&store, ClassificationRules::shipped_defaults()).unwrap();

    let charger = ChargerId::new("CH-9").unwrap();
    let faults = store.faults_for(&charger).unwrap();
    assert_eq!(faults.len(), 1);
    assert_eq!(faults[0].reason, "Ground Fault");
    assert_eq!(faults[0].at, at);
    let samples = store.samples_for(&charger).unwrap();
    assert_eq!(samples.len(), 1);
    assert_eq!(samples[0].status, ChargerStatus::Faulted);
}

#[test]
fn overview_upserts_unseen_serial_with_sample_at_extraction_time() {
    let store = Store::open_in_memory().unwrap();
    let extracted = ts("2024-03-01T12:00:00Z");
    let item = NewRawItem::new(
        extracted,
        RawItemType::StationOverview,
        Some(extracted),
        &serde_json::json!({"rows": [
            {"serial_number": "S-77", "address": "Bay 77", "status": "available"},
            {"serial_number": "S-78", "address": "Bay 78", "status": "Resting"},
        ]}),
    );
    store.store_raw(&item).unwrap();
    let summary = pipeline::normalize(&store, ClassificationRules::shipped_defaults()).unwrap();

    let chargers = store.chargers().unwrap();
    assert_eq!(chargers.len(), 2);
    let s77 = ChargerId::new("S-77").unwrap();
    let samples = store.samples_for(&s77).unwrap();
    assert_eq!(samples.len(), 1);
    assert_eq!(samples[0].at, extracted);
    assert_eq!(samples[0].status, ChargerStatus::Available);
    // unrecognized source status maps to unknown rather than guessing, and
    // the pass reports it
    let s78 = ChargerId::new("S-78").unwrap();
    assert_eq!(
        store.samples_for(&s78).unwrap()[0].status,
        ChargerStatus::Unknown
    );
    assert_eq!(summary.unrecognized_statuses, 1);
}

#[test]
fn informational_events_change_nothing() {
    let store = Store::open_in_memory().unwrap();
    let at = ts("2024-01-01T06:00:00Z");
    let item = NewRawItem::new(
        ts("2024-01-02T00:00:00Z"),
        RawItemType::ChargerEvent,
        Some(at),
        &serde_json::json!({
            "serial_number": "CH-9",
            "event_name": "Firmware heartbeat",
            "timestamp_utc": at.as_secs(),
        }),
    );
    store.store_raw(&item).unwrap();
    pipeline::normalize(&store, ClassificationRules::shipped_defaults()).unwrap();
    let charger = ChargerId::new("CH-9").unwrap();
    assert!(store.samples_for(&charger).unwrap().is_empty());
    assert!(store.faults_for(&charger).unwrap().is_empty());
    // but the charger itself is now known
    assert_eq!(store.chargers().unwrap().len(), 1);
}

#[test]
fn reingesting_the_same_files_does_not_double_apply() {
    let dir = tempfile::tempdir().unwrap();
    let events = write_file(
        &dir,
        "events.csv",
        "serial_number,timestamp,event_name\n\
         CH-001,2024-01-01T06:00:00Z,Ground Fault\n",
    );
    let config = export_config(&dir, "2024-01-02T00:00:00Z", &[events]);
    let store = Store::open(&config.store_path).unwrap();

    pipeline::ingest(&store, &config, None).unwrap();
    pipeline::ingest(&store, &config, None).unwrap();
    // the raw store keeps an honest append-only history
    assert_eq!(store.raw_item_count().unwrap(), 2);

    let summary = pipeline::normalize(&store, config.rules()).unwrap();
    assert_eq!(summary.processed, 2);
    assert_eq!(summary.duplicates_skipped, 1);

    let charger = ChargerId::new("CH-001").unwrap();
    assert_eq!(store.faults_for(&charger).unwrap().len(), 1);
    assert_eq!(store.samples_for(&charger).unwrap().len(), 1);
}

#[test]
fn applying_an_item_twice_is_a_noop() {
    let store = Store::open_in_memory().unwrap();
    let at = ts("2024-01-01T06:00:00Z");
    let item = NewRawItem::new(
        ts("2024-01-02T00:00:00Z"),
        RawItemType::ChargerEvent,
        Some(at),
        &serde_json::json!({
            "serial_number": "CH-9",
            "event_name": "Tamper Detect",
            "timestamp_utc": at.as_secs(),
        }),
    );
    store.store_raw(&item).unwrap();
    let fetched = store.fetch_unprocessed(10).unwrap();
    let mut normalizer = Normalizer::new(&store, ClassificationRules::shipped_defaults());
    assert!(matches!(
        normalizer.apply_raw_item(&fetched[0]).unwrap(),
        ApplyOutcome::Applied(_)
    ));
    assert!(matches!(
        normalizer.apply_raw_item(&fetched[0]).unwrap(),
        ApplyOutcome::DuplicateSkipped
    ));
    let charger = ChargerId::new("CH-9").unwrap();
    assert_eq!(store.faults_for(&charger).unwrap().len(), 1);
}

#[test]
fn malformed_payloads_are_quarantined_and_the_rest_proceed() {
    let store = Store::open_in_memory().unwrap();
    let bad = NewRawItem::new(
        ts("2024-01-02T00:00:00Z"),
        RawItemType::ChargerEvent,
        Some(ts("2024-01-01T00:00:00Z")),
        &serde_json::json!({"serial_number": "CH-9"}), // no event_name
    );
    let good = NewRawItem::new(
        ts("2024-01-02T00:00:00Z"),
        RawItemType::ChargingSessionStart,
        Some(ts("2024-01-01T01:00:00Z")),
        &serde_json::json!({"serial_number": "CH-9", "at_utc": 1_704_070_800}),
    );
    store.store_raw(&bad).unwrap();
    store.store_raw(&good).unwrap();

    let summary = pipeline::normalize(&store, ClassificationRules::shipped_defaults()).unwrap();
    assert_eq!(summary.processed, 1);
    assert_eq!(summary.quarantined, 1);
    assert_eq!(store.quarantine_count().unwrap(), 1);
    assert_eq!(store.unprocessed_count().unwrap(), 0);
    let charger = ChargerId::new("CH-9").unwrap();
    assert_eq!(store.samples_for(&charger).unwrap().len(), 1);
}

#[test]
fn quarantined_multirow_items_leave_no_partial_mutations() {
    let store = Store::open_in_memory().unwrap();
    let extracted = ts("2024-03-01T12:00:00Z");
    // second row lacks a serial number, so the whole item must quarantine
    let item = NewRawItem::new(
        extracted,
        RawItemType::StationOverview,
        Some(extracted),
        &serde_json::json!({"rows": [
            {"serial_number": "S-1", "address": "Bay 1", "status": "available"},
            {"address": "Bay 2", "status": "available"},
        ]}),
    );
    store.store_raw(&item).unwrap();
    let summary = pipeline::normalize(&store, ClassificationRules::shipped_defaults()).unwrap();
    assert_eq!(summary.quarantined, 1);
    assert!(store.chargers().unwrap().is_empty(), "no half-applied rows");
    assert_eq!(store.sample_count().unwrap(), 0);
}

#[test]
fn insertion_order_permutations_yield_identical_metrics() {
    // per-charger event times are distinct, so chronological replay is
    // insensitive to storage order
    let specs: Vec<(&str, i64, &str)> = vec![
        ("CH-1", 1_000, "Tamper Detect"),
        ("CH-1", 2_000, "Fault Cleared"),
        ("CH-2", 1_000, "Network Connection Lost"),
        ("CH-1", 3_000, "Power Off"),
        ("CH-2", 2_500, "Network Connection Restored"),
        ("CH-1", 4_000, "Power On"),
    ];
    let orders: Vec<Vec<usize>> = vec![
        (0..specs.len()).collect(),
        vec![5, 4, 3, 2, 1, 0],
        vec![2, 0, 4, 1, 5, 3],
    ];
    let mut all_rows = Vec::new();
    for order in orders {
        let store = Store::open_in_memory().unwrap();
        for idx in order {
            let (serial, at, name) = specs[idx];
            let item = NewRawItem::new(
                ts("2024-01-02T00:00:00Z"),
                RawItemType::ChargerEvent,
                Some(Timestamp::from_unix(at).unwrap()),
                &serde_json::json!({
                    "serial_number": serial,
                    "event_name": name,
                    "timestamp_utc": at,
                }),
            );
            store.store_raw(&item).unwrap();
        }
        pipeline::normalize(&store, ClassificationRules::shipped_defaults()).unwrap();
        let spec = PeriodSpec::new(
            Granularity::Custom,
            (Timestamp::from_unix(0).unwrap(), Timestamp::from_unix(10_000).unwrap()),
            "UTC",
        )
        .unwrap();
        all_rows.push(compute_rows(&store, &spec));
    }
    assert_eq!(all_rows[0], all_rows[1]);
    assert_eq!(all_rows[0], all_rows[2]);
}

#[test]
fn rolled_back_batches_leave_no_partial_state() {
    let store = Store::open_in_memory().unwrap();
    let at = ts("2024-01-01T06:00:00Z");
    let item = NewRawItem::new(
        ts("2024-01-02T00:00:00Z"),
        RawItemType::ChargerEvent,
        Some(at),
        &serde_json::json!({
            "serial_number": "CH-9",
            "event_name": "Ground Fault",
            "timestamp_utc": at.as_secs(),
        }),
    );
    store.store_raw(&item).unwrap();

    // interrupted pass: apply + mark inside a transaction, then roll back
    let fetched = store.fetch_unprocessed(10).unwrap();
    store.begin().unwrap();
    let mut normalizer = Normalizer::new(&store, ClassificationRules::shipped_defaults());
    normalizer.apply_raw_item(&fetched[0]).unwrap();
    store.mark_processed(fetched[0].raw_id).unwrap();
    store.rollback().unwrap();
    drop(normalizer);

    let charger = ChargerId::new("CH-9").unwrap();
    assert!(store.faults_for(&charger).unwrap().is_empty());
    assert_eq!(store.unprocessed_count().unwrap(), 1);

    // the retry applies exactly once
    pipeline::normalize(&store, ClassificationRules::shipped_defaults()).unwrap();
    assert_eq!(store.faults_for(&charger).unwrap().len(), 1);
}

#[test]
fn reset_processed_rebuild_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let events = write_file(
        &dir,
        "events.csv",
        "serial_number,timestamp,event_name\n\
         CH-001,2024-01-01T06:00:00Z,Hardware Fault\n\
         CH-001,2024-01-01T12:00:00Z,Fault Cleared\n",
    );
    let config = export_config(&dir, "2024-01-02T00:00:00Z", &[events]);
    let store = Store::open(&config.store_path).unwrap();
    pipeline::ingest(&store, &config, None).unwrap();
    pipeline::normalize(&store, config.rules()).unwrap();

    let spec = day_spec("2024-01-01T00:00:00Z", "2024-01-02T00:00:00Z");
    let before = compute_rows(&store, &spec);

    store.reset_processed().unwrap();
    assert_eq!(store.sample_count().unwrap(), 0);
    pipeline::normalize(&store, config.rules()).unwrap();
    let after = compute_rows(&store, &spec);
    assert_eq!(before, after);
}

#[test]
fn ingest_with_bad_path_stores_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_file(
        &dir,
        "events.csv",
        "serial_number,timestamp,event_name\nCH-001,2024-01-01T00:00:00Z,Power Off\n",
    );
    let config = export_config(
        &dir,
        "2024-01-02T00:00:00Z",
        &[good, dir.path().join("missing.csv")],
    );
    let store = Store::open(&config.store_path).unwrap();
    assert!(pipeline::ingest(&store, &config, None).is_err());
    assert_eq!(store.raw_item_count().unwrap(), 0);
}

#[test]
fn empty_queue_normalizes_to_zero() {
    let store = Store::open_in_memory().unwrap();
    let summary = pipeline::normalize(&store, ClassificationRules::shipped_defaults()).unwrap();
    assert_eq!(summary.processed, 0);
    assert_eq!(summary.quarantined, 0);
}
