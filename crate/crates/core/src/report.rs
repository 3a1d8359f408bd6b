//! Site-wide aggregation and machine-readable report exports.
//!
//! Site averages are unweighted per-charger means (each active charger
//! counts equally); the site fault-reason allocation is duration-weighted
//! so chargers with no faulted time cannot skew it. Both choices are echoed
//! in the JSON report metadata. Exports are byte-deterministic: stable key
//! order, percents printed with one decimal.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::UptimePolicy;
use crate::model::{ChargerId, MetricsRow, PeriodWindow};

/// Aggregated site view for one window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SiteReport {
    pub window: PeriodWindow,
    pub chargers_active: usize,
    pub mean_uptime_pct: Option<f64>,
    pub mean_fault_time_pct: f64,
    pub mean_unreachable_time_pct: f64,
    pub mean_unavailable_time_pct: f64,
    pub mean_unknown_time_pct: f64,
    /// Duration-weighted allocation of site faulted time across reasons;
    /// sums to 100 when any faulted time exists.
    pub reason_allocation_pct: BTreeMap<String, f64>,
    pub policy: UptimePolicy,
}

/// Unweighted site means over the active chargers for one window.
/// Returns `None` when no charger is active (undefined report).
pub fn site_average(
    rows: &[MetricsRow],
    active: &BTreeSet<ChargerId>,
    policy: &UptimePolicy,
) -> Option<SiteReport> {
    let rows: Vec<&MetricsRow> = rows.iter().filter(|r| active.contains(&r.charger)).collect();
    let first = rows.first()?;
    let window = first.window.clone();
    debug_assert!(
        rows.iter().all(|r| r.window == window),
        "site_average expects rows for a single window"
    );
    let n = rows.len() as f64;

    let uptimes: Vec<f64> = rows.iter().filter_map(|r| r.uptime_pct).collect();
    let mean_uptime_pct = if uptimes.is_empty() {
        None
    } else {
        Some(uptimes.iter().sum::<f64>() / uptimes.len() as f64)
    };

    // duration-weighted reason allocation: with a shared window length the
    // weights reduce to each charger's fault-time percentage
    let total_fault: f64 = rows.iter().map(|r| r.fault_time_pct).sum();
    let mut reason_allocation_pct = BTreeMap::new();
    if total_fault > 0.0 {
        for row in &rows {
            for (reason, reason_pct) in &row.fault_reason_pct {
                *reason_allocation_pct.entry(reason.clone()).or_insert(0.0) +=
                    row.fault_time_pct * reason_pct / total_fault;
            }
        }
    }

    Some(SiteReport {
        window,
        chargers_active: rows.len(),
        mean_uptime_pct,
        mean_fault_time_pct: rows.iter().map(|r| r.fault_time_pct).sum::<f64>() / n,
        mean_unreachable_time_pct: rows.iter().map(|r| r.unreachable_time_pct).sum::<f64>() / n,
        mean_unavailable_time_pct: rows.iter().map(|r| r.unavailable_time_pct).sum::<f64>() / n,
        mean_unknown_time_pct: rows.iter().map(|r| r.unknown_time_pct).sum::<f64>() / n,
        reason_allocation_pct,
        policy: policy.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

/// Percent formatting used at presentation: one decimal place.
pub fn fmt_pct(value: f64) -> String {
    format!("{value:.1}")
}

fn fmt_opt_pct(value: Option<f64>) -> String {
    value.map(fmt_pct).unwrap_or_default()
}

/// Writes site reports to `dest`. Deterministic: identical inputs produce
/// identical bytes. CSV is presentation-rounded (one decimal); JSON carries
/// full precision and round-trips.
pub fn export_report(reports: &[SiteReport], format: ReportFormat, dest: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::InvalidValue("no site reports to export".into()));
    }
    let bytes = match format {
        ReportFormat::Csv => render_csv(reports)?,
        ReportFormat::Json => render_json(reports)?,
    };
    write_atomically(dest, &bytes)
}

fn render_csv(reports: &[SiteReport]) -> Result<Vec<u8>> {
    // union of reasons across all windows, sorted, as trailing columns
    let reasons: BTreeSet<&str> = reports
        .iter()
        .flat_map(|r| r.reason_allocation_pct.keys().map(String::as_str))
        .collect();

    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "window_label".to_string(),
        "chargers_active".to_string(),
        "uptime_pct".to_string(),
        "fault_time_pct".to_string(),
        "unreachable_time_pct".to_string(),
        "unavailable_time_pct".to_string(),
        "unknown_time_pct".to_string(),
    ];
    header.extend(reasons.iter().map(|r| format!("reason:{r}")));
    let io_err = |e: csv::Error| Error::Csv {
        path: "<report>".into(),
        source: e,
    };
    writer.write_record(&header).map_err(io_err)?;
    for report in reports {
        let mut record = vec![
            report.window.label.clone(),
            report.chargers_active.to_string(),
            fmt_opt_pct(report.mean_uptime_pct),
            fmt_pct(report.mean_fault_time_pct),
            fmt_pct(report.mean_unreachable_time_pct),
            fmt_pct(report.mean_unavailable_time_pct),
            fmt_pct(report.mean_unknown_time_pct),
        ];
        for reason in &reasons {
            record.push(
                report
                    .reason_allocation_pct
                    .get(*reason)
                    .map(|v| fmt_pct(*v))
                    .unwrap_or_else(|| "0.0".to_string()),
            );
        }
        writer.write_record(&record).map_err(io_err)?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::InvalidValue(format!("csv flush failed: {e}")))
}

#[derive(Serialize)]
struct JsonEnvelope<'a> {
    aggregation: Aggregation,
    reports: &'a [SiteReport],
}

#[derive(Serialize)]
struct Aggregation {
    charger_mean: &'static str,
    reason_allocation: &'static str,
}

fn render_json(reports: &[SiteReport]) -> Result<Vec<u8>> {
    let envelope = JsonEnvelope {
        aggregation: Aggregation {
            charger_mean: "unweighted_per_charger",
            reason_allocation: "duration_weighted",
        },
        reports,
    };
    let mut bytes = serde_json::to_vec_pretty(&envelope)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn write_atomically(dest: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = dest.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut file = std::fs::File::create(dest).map_err(|e| Error::io(dest, e))?;
    file.write_all(bytes).map_err(|e| Error::io(dest, e))?;
    Ok(())
}

/// The chart-oriented long-format views.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotView {
    /// One series per state bucket: the stacked-composition chart.
    StackedStates,
    /// One series per fault reason: the fault-time allocation chart.
    ReasonAllocation,
}

impl PlotView {
    pub fn as_str(self) -> &'static str {
        match self {
            PlotView::StackedStates => "stacked_states",
            PlotView::ReasonAllocation => "reason_allocation",
        }
    }
}

/// One long-format data point: (window, series, value).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlotRow {
    pub window_label: String,
    pub series: String,
    pub value: f64,
}

/// Emits the series a plotting tool needs for the given view, in window
/// order. Reports must be sorted by window.
pub fn plot_data(reports: &[SiteReport], view: PlotView) -> Vec<PlotRow> {
    let mut rows = Vec::new();
    for report in reports {
        match view {
            PlotView::StackedStates => {
                let series: [(&str, Option<f64>); 5] = [
                    ("uptime", report.mean_uptime_pct),
                    ("fault_time", Some(report.mean_fault_time_pct)),
                    ("unreachable_time", Some(report.mean_unreachable_time_pct)),
                    ("unavailable_time", Some(report.mean_unavailable_time_pct)),
                    ("unknown_time", Some(report.mean_unknown_time_pct)),
                ];
                for (name, value) in series {
                    if let Some(value) = value {
                        rows.push(PlotRow {
                            window_label: report.window.label.clone(),
                            series: name.to_string(),
                            value,
                        });
                    }
                }
            }
            PlotView::ReasonAllocation => {
                for (reason, value) in &report.reason_allocation_pct {
                    rows.push(PlotRow {
                        window_label: report.window.label.clone(),
                        series: reason.clone(),
                        value: *value,
                    });
                }
            }
        }
    }
    rows
}

/// Writes plot rows as CSV (`window_label,series,value`), presentation
/// rounded, deterministic.
pub fn export_plot_data(rows: &[PlotRow], dest: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| Error::Csv {
        path: dest.to_path_buf(),
        source: e,
    };
    writer
        .write_record(["window_label", "series", "value"])
        .map_err(io_err)?;
    for row in rows {
        writer
            .write_record([&row.window_label, &row.series, &fmt_pct(row.value)])
            .map_err(io_err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::InvalidValue(format!("csv flush failed: {e}")))?;
    write_atomically(dest, &bytes)
}
