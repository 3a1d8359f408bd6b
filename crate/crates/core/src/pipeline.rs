//! End-to-end orchestration: ingest, normalize, compute, report, simulate.
//!
//! These are the operations the CLI fronts; they are plain functions over a
//! [`Store`] so embedders and tests can drive the same paths.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::adapter::{Adapter, ExportAdapter, RowReject};
use crate::config::{Config, SourceConfig};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, UptimePolicy};
use crate::model::{ChargerId, MetricsRow, PeriodWindow, Timestamp};
use crate::modelstore::ChargerActivity;
use crate::report::{
    export_plot_data, export_report, plot_data, site_average, PlotView, ReportFormat, SiteReport,
};
use crate::simulator::{generate_fleet, FleetScenario};
use crate::statemachine::{ApplyOutcome, ClassificationRules, Normalizer};
use crate::store::Store;
use crate::timeline::{build_timeline, slice_periods, PeriodSpec};

const NORMALIZE_BATCH: usize = 5_000;

#[derive(Debug, Default)]
pub struct IngestSummary {
    pub items_stored: u64,
    pub rejects: Vec<RowReject>,
}

/// Extracts raw items from the configured sources and appends them to the
/// store. `override_inputs`, when given, replaces the input paths of the
/// single configured source (or an implicit export source when none is
/// configured). All-or-nothing: extraction failures leave the store
/// untouched.
pub fn ingest(
    store: &Store,
    config: &Config,
    override_inputs: Option<&[PathBuf]>,
) -> Result<IngestSummary> {
    let mut sources: Vec<SourceConfig> = config.sources.clone();
    if let Some(paths) = override_inputs {
        match sources.len() {
            0 => sources.push(SourceConfig {
                adapter: ExportAdapter::NAME.to_string(),
                name: None,
                settings: Default::default(),
                inputs: paths.to_vec(),
            }),
            1 => sources[0].inputs = paths.to_vec(),
            n => {
                return Err(Error::Config(format!(
                    "explicit input paths are ambiguous with {n} configured sources"
                )))
            }
        }
    }

    // extract everything before touching the store
    let mut summary = IngestSummary::default();
    let mut items = Vec::new();
    for source in &sources {
        let adapter = make_adapter(source)?;
        let extraction = adapter.extract(&source.inputs)?;
        items.extend(extraction.items);
        summary.rejects.extend(extraction.rejects);
    }

    store.begin()?;
    let stored = (|| -> Result<u64> {
        let mut stored = 0u64;
        for item in &items {
            store.store_raw(item)?;
            stored += 1;
        }
        Ok(stored)
    })();
    match stored {
        Ok(n) => {
            store.commit()?;
            summary.items_stored = n;
            Ok(summary)
        }
        Err(e) => {
            let _ = store.rollback();
            Err(e)
        }
    }
}

fn make_adapter(source: &SourceConfig) -> Result<impl Adapter> {
    match source.adapter.as_str() {
        ExportAdapter::NAME => ExportAdapter::from_settings(&source.settings),
        other => Err(Error::Config(format!("unknown adapter `{other}`"))),
    }
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct NormalizeSummary {
    pub processed: u64,
    pub quarantined: u64,
    pub duplicates_skipped: u64,
    /// Source status strings that mapped to `unknown`.
    pub unrecognized_statuses: u64,
}

/// Applies every unprocessed raw item to the normalized model in
/// chronological order, marking items processed as it goes. Batches run in
/// transactions; re-running after a crash never double-applies an item.
pub fn normalize(store: &Store, rules: ClassificationRules) -> Result<NormalizeSummary> {
    let mut summary = NormalizeSummary::default();
    let mut normalizer = Normalizer::new(store, rules);
    loop {
        let batch = store.fetch_unprocessed(NORMALIZE_BATCH)?;
        if batch.is_empty() {
            break;
        }
        store.begin()?;
        let result = (|| -> Result<()> {
            for item in &batch {
                match normalizer.apply_raw_item(item)? {
                    ApplyOutcome::Applied(counts) => {
                        summary.processed += 1;
                        summary.unrecognized_statuses += counts.unrecognized_statuses;
                    }
                    ApplyOutcome::DuplicateSkipped => {
                        summary.processed += 1;
                        summary.duplicates_skipped += 1;
                    }
                    ApplyOutcome::Quarantined(_) => summary.quarantined += 1,
                }
                store.mark_processed(item.raw_id)?;
            }
            Ok(())
        })();
        match result {
            Ok(()) => store.commit()?,
            Err(e) => {
                let _ = store.rollback();
                return Err(e);
            }
        }
    }
    Ok(summary)
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct ComputeSummary {
    pub chargers: u64,
    pub windows: u64,
    pub rows_persisted: u64,
}

/// Builds each charger's timeline over the spec range and persists one
/// metrics row per (charger, window).
pub fn compute(store: &Store, spec: &PeriodSpec, policy: &UptimePolicy) -> Result<ComputeSummary> {
    let windows = slice_periods(spec)?;
    let chargers = store.chargers()?;
    let mut summary = ComputeSummary {
        chargers: chargers.len() as u64,
        windows: windows.len() as u64,
        rows_persisted: 0,
    };
    if windows.is_empty() || chargers.is_empty() {
        return Ok(summary);
    }

    store.begin()?;
    let result = (|| -> Result<u64> {
        let mut persisted = 0u64;
        for charger in &chargers {
            let rows = compute_charger_rows(store, &charger.id, spec, &windows, policy)?;
            store.save_metrics_rows(spec.granularity, &rows)?;
            persisted += rows.len() as u64;
        }
        Ok(persisted)
    })();
    match result {
        Ok(n) => {
            store.commit()?;
            summary.rows_persisted = n;
            Ok(summary)
        }
        Err(e) => {
            let _ = store.rollback();
            Err(e)
        }
    }
}

/// Metric rows for one charger, computed from its stored samples and
/// faults. Exposed for verification harnesses.
pub fn compute_charger_rows(
    store: &Store,
    charger: &ChargerId,
    spec: &PeriodSpec,
    windows: &[PeriodWindow],
    policy: &UptimePolicy,
) -> Result<Vec<MetricsRow>> {
    let samples = store.samples_for(charger)?;
    let timeline = build_timeline(charger, &samples, spec.range)?;
    let faults = store.faults_for(charger)?;
    compute_metrics(&timeline, &faults, windows, policy)
}

#[derive(Debug, Default)]
pub struct ReportSummary {
    pub windows_reported: u64,
    /// Windows with no active charger (undefined site report).
    pub windows_skipped: u64,
    pub files: Vec<PathBuf>,
}

/// Builds per-window site reports from persisted metric rows, applying the
/// activity rule. Returns the reports plus the count of windows skipped for
/// having no active charger.
pub fn site_reports(
    store: &Store,
    config: &Config,
    spec: &PeriodSpec,
) -> Result<(Vec<SiteReport>, u64)> {
    let policy = config.policy()?;
    let rows = store.load_metrics_rows(spec.granularity, spec.range)?;
    let activity = store.charger_activity()?;
    let fleet_last_overview = activity.iter().filter_map(|a| a.last_overview_at).max();
    let horizon_days = config.report.decommission_horizon_days;

    // group rows by window, already ordered by (start, charger)
    let mut reports: Vec<SiteReport> = Vec::new();
    let mut skipped = 0u64;
    let mut group: Vec<MetricsRow> = Vec::new();
    let flush = |group: &mut Vec<MetricsRow>, skipped: &mut u64, out: &mut Vec<SiteReport>| {
        if group.is_empty() {
            return;
        }
        let window = group[0].window.clone();
        let active = active_chargers(&activity, &window, horizon_days, fleet_last_overview);
        match site_average(group, &active, &policy) {
            Some(report) => out.push(report),
            None => *skipped += 1,
        }
        group.clear();
    };
    for row in rows {
        if group.last().is_some_and(|g| g.window != row.window) {
            flush(&mut group, &mut skipped, &mut reports);
        }
        group.push(row);
    }
    flush(&mut group, &mut skipped, &mut reports);
    Ok((reports, skipped))
}

/// Builds site reports from persisted metric rows and writes the report
/// file plus the requested plot-data views into `out_dir`.
pub fn report(
    store: &Store,
    config: &Config,
    spec: &PeriodSpec,
    format: ReportFormat,
    out_dir: &Path,
    views: &[PlotView],
) -> Result<ReportSummary> {
    let (site_reports, skipped) = site_reports(store, config, spec)?;
    let mut summary = ReportSummary {
        windows_reported: site_reports.len() as u64,
        windows_skipped: skipped,
        files: Vec::new(),
    };
    if site_reports.is_empty() {
        return Ok(summary);
    }

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let report_path = out_dir.join(format!("site_report.{}", format.extension()));
    export_report(&site_reports, format, &report_path)?;
    summary.files.push(report_path);
    for view in views {
        let rows = plot_data(&site_reports, *view);
        let path = out_dir.join(format!("{}.csv", view.as_str()));
        export_plot_data(&rows, &path)?;
        summary.files.push(path);
    }
    Ok(summary)
}

/// The site-report activity rule: a charger is active in a window when it
/// has a non-unknown observation before the window's end and has not been
/// absent from station overviews for the decommission horizon (measured
/// only while overviews kept arriving).
pub fn active_chargers(
    activity: &[ChargerActivity],
    window: &PeriodWindow,
    decommission_horizon_days: u32,
    fleet_last_overview: Option<Timestamp>,
) -> BTreeSet<ChargerId> {
    let horizon_secs = i64::from(decommission_horizon_days) * 86_400;
    activity
        .iter()
        .filter(|a| {
            let Some(first) = a.first_active_at else {
                return false;
            };
            if first.as_secs() >= window.end.as_secs() {
                return false;
            }
            if let (Some(last_seen), Some(fleet_last)) = (a.last_overview_at, fleet_last_overview)
            {
                let cutoff = last_seen.as_secs() + horizon_secs;
                if cutoff <= window.start.as_secs() && cutoff <= fleet_last.as_secs() {
                    return false;
                }
            }
            true
        })
        .map(|a| a.charger.clone())
        .collect()
}

#[derive(Debug)]
pub struct SimulateSummary {
    pub chargers: u64,
    pub event_rows: u64,
    pub session_rows: u64,
    pub files: Vec<PathBuf>,
}

/// Generates a synthetic fleet into `out_dir`: the three export CSVs, the
/// ground truth (`truth.json`), and a ready-to-run `config.yaml` whose
/// extraction timestamp is pinned to the horizon start.
pub fn simulate(scenario: &FleetScenario, out_dir: &Path) -> Result<SimulateSummary> {
    let (truth, exports) = generate_fleet(scenario)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let write = |name: &str, contents: &str| -> Result<PathBuf> {
        let path = out_dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    };

    let mut files = Vec::new();
    files.push(write("overview.csv", &exports.overview)?);
    files.push(write("events.csv", &exports.events)?);
    files.push(write("sessions.csv", &exports.sessions)?);
    let mut truth_json = serde_json::to_string_pretty(&truth)?;
    truth_json.push('\n');
    files.push(write("truth.json", &truth_json)?);

    let mut config = Config::for_store("store.db");
    config.sources.push(SourceConfig {
        adapter: ExportAdapter::NAME.to_string(),
        name: Some("simulated-export".to_string()),
        settings: [
            (
                "extracted_at".to_string(),
                scenario.horizon.start.to_rfc3339(),
            ),
            ("manufacturer".to_string(), "SimCo".to_string()),
        ]
        .into_iter()
        .collect(),
        inputs: vec![
            "overview.csv".into(),
            "events.csv".into(),
            "sessions.csv".into(),
        ],
    });
    files.push(write("config.yaml", &serde_yaml::to_string(&config)?)?);

    Ok(SimulateSummary {
        chargers: truth.chargers.len() as u64,
        event_rows: exports.events.lines().count().saturating_sub(1) as u64,
        session_rows: exports.sessions.lines().count().saturating_sub(1) as u64,
        files,
    })
}
