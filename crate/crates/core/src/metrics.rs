//! Reliability metric computation: uptime, fault time, fault-reason time,
//! unreachable time, and the year-scale regulatory uptime formula.
//!
//! Durations stay in integer seconds all the way through accounting;
//! percentages are computed in double precision only at the last step.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ChargerStatus, FaultReasonDurations, FaultRecord, MetricsRow, PeriodWindow, StateDurations,
    Timestamp,
};
use crate::timeline::{faulted_reason_durations_sweep, state_durations_sweep, Timeline};

/// Minutes in a non-leap year; the denominator of the regulatory formula.
pub const MINUTES_PER_YEAR: f64 = 525_600.0;

/// Inputs to the year-scale uptime formula, in minutes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeviInputs {
    /// Total minutes of outage in the previous year.
    pub outage_minutes: f64,
    /// Minutes of that outage caused by reasons outside the operator's
    /// control.
    pub excluded_minutes: f64,
}

/// How unobserved (`unknown`) time enters the uptime calculation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownPolicy {
    /// Unknown time counts as not up (conservative default).
    #[default]
    NotUp,
    /// Unknown time is removed from the denominator.
    ExcludeFromDenominator,
    /// Unknown time counts as up.
    CountAsUp,
}

/// A per-charger `[start, end)` span whose downtime is excluded from the
/// uptime calculation (the analog of regulatory excluded time).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedInterval {
    pub charger: crate::model::ChargerId,
    pub start: Timestamp,
    pub end: Timestamp,
}

/// Uptime computation policy, echoed into report metadata.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UptimePolicy {
    #[serde(default)]
    pub unknown_policy: UnknownPolicy,
    #[serde(default)]
    pub excluded_intervals: Vec<ExcludedInterval>,
}

impl UptimePolicy {
    pub fn validate(&self) -> Result<()> {
        let mut by_charger: BTreeMap<&str, Vec<(i64, i64)>> = BTreeMap::new();
        for e in &self.excluded_intervals {
            if e.start >= e.end {
                return Err(Error::InvalidMetricInputs(format!(
                    "excluded interval for {} is empty",
                    e.charger
                )));
            }
            by_charger
                .entry(e.charger.as_str())
                .or_default()
                .push((e.start.as_secs(), e.end.as_secs()));
        }
        for (charger, mut spans) in by_charger {
            spans.sort_unstable();
            for pair in spans.windows(2) {
                if pair[1].0 < pair[0].1 {
                    return Err(Error::InvalidMetricInputs(format!(
                        "excluded intervals for {charger} overlap"
                    )));
                }
            }
        }
        Ok(())
    }

    fn spans_for(&self, charger: &crate::model::ChargerId) -> Vec<(Timestamp, Timestamp)> {
        let mut spans: Vec<(Timestamp, Timestamp)> = self
            .excluded_intervals
            .iter()
            .filter(|e| &e.charger == charger)
            .map(|e| (e.start, e.end))
            .collect();
        spans.sort_unstable();
        spans
    }
}

fn pct(numerator: u64, denominator: u64) -> f64 {
    numerator as f64 / denominator as f64 * 100.0
}

/// Percentage of the window the charger was up (occupied or available).
/// Returns `None` when the denominator is zero (all-unknown window under
/// [`UnknownPolicy::ExcludeFromDenominator`]).
pub fn uptime(d: &StateDurations, policy: &UptimePolicy) -> Option<f64> {
    uptime_with_exclusions(d, 0, policy)
}

/// [`uptime`] with downtime seconds already credited back by excluded-time
/// spans. The caller computes the overlap of excluded intervals with
/// faulted/unreachable/unavailable time; [`compute_metrics`] does this.
pub fn uptime_with_exclusions(
    d: &StateDurations,
    excluded_downtime_seconds: u64,
    policy: &UptimePolicy,
) -> Option<f64> {
    let total = d.window.duration_seconds();
    let unknown = d.seconds_by_state.get(ChargerStatus::Unknown);
    let up = d.seconds_by_state.up();
    let (numerator, denominator) = match policy.unknown_policy {
        UnknownPolicy::NotUp => (up + excluded_downtime_seconds, total),
        UnknownPolicy::CountAsUp => (up + unknown + excluded_downtime_seconds, total),
        UnknownPolicy::ExcludeFromDenominator => {
            (up + excluded_downtime_seconds, total - unknown)
        }
    };
    if denominator == 0 {
        None
    } else {
        Some(pct(numerator, denominator))
    }
}

/// Percentage of the window spent faulted.
pub fn fault_time(d: &StateDurations) -> f64 {
    pct(
        d.seconds_by_state.get(ChargerStatus::Faulted),
        d.window.duration_seconds(),
    )
}

/// Percentage of the window spent unreachable.
pub fn unreachable_time(d: &StateDurations) -> f64 {
    pct(
        d.seconds_by_state.get(ChargerStatus::Unreachable),
        d.window.duration_seconds(),
    )
}

/// Percentage of the window spent explicitly taken out of service.
pub fn unavailable_time(d: &StateDurations) -> f64 {
    pct(
        d.seconds_by_state.get(ChargerStatus::Unavailable),
        d.window.duration_seconds(),
    )
}

/// Percentage of the window with no status observation.
pub fn unknown_time(d: &StateDurations) -> f64 {
    pct(
        d.seconds_by_state.get(ChargerStatus::Unknown),
        d.window.duration_seconds(),
    )
}

/// Allocation of faulted time across reported reasons, as percentages of
/// total faulted time. Empty when there was no faulted time.
pub fn fault_reason_time(r: &FaultReasonDurations) -> BTreeMap<String, f64> {
    let total = r.total();
    if total == 0 {
        return BTreeMap::new();
    }
    r.seconds_by_reason
        .iter()
        .map(|(reason, secs)| (reason.clone(), pct(*secs, total)))
        .collect()
}

/// Year-scale uptime: `(525600 - (outage - excluded)) / 525600 * 100`.
pub fn nevi_uptime(n: &NeviInputs) -> Result<f64> {
    let valid = |v: f64| v.is_finite() && v >= 0.0;
    if !valid(n.outage_minutes) || !valid(n.excluded_minutes) {
        return Err(Error::InvalidMetricInputs(
            "outage and excluded minutes must be nonnegative".into(),
        ));
    }
    if n.excluded_minutes > n.outage_minutes {
        return Err(Error::InvalidMetricInputs(format!(
            "excluded minutes {} exceed outage minutes {}",
            n.excluded_minutes, n.outage_minutes
        )));
    }
    if n.outage_minutes > MINUTES_PER_YEAR {
        return Err(Error::InvalidMetricInputs(format!(
            "outage minutes {} exceed a full year ({MINUTES_PER_YEAR})",
            n.outage_minutes
        )));
    }
    Ok((MINUTES_PER_YEAR - (n.outage_minutes - n.excluded_minutes)) / MINUTES_PER_YEAR * 100.0)
}

/// Computes one [`MetricsRow`] per window for a charger's timeline.
/// Windows must be sorted and non-overlapping, inside the timeline horizon.
pub fn compute_metrics(
    timeline: &Timeline,
    faults: &[FaultRecord],
    windows: &[PeriodWindow],
    policy: &UptimePolicy,
) -> Result<Vec<MetricsRow>> {
    policy.validate()?;
    let durations = state_durations_sweep(timeline, windows)?;
    let reasons = faulted_reason_durations_sweep(timeline, faults, windows);
    let excluded_spans = policy.spans_for(timeline.charger());

    let mut rows = Vec::with_capacity(windows.len());
    for (d, r) in durations.iter().zip(&reasons) {
        debug_assert_eq!(
            r.total(),
            d.seconds_by_state.get(ChargerStatus::Faulted),
            "reason attribution must conserve faulted time"
        );
        let excluded = excluded_downtime_seconds(timeline, &excluded_spans, &d.window);
        rows.push(MetricsRow {
            charger: d.charger.clone(),
            window: d.window.clone(),
            uptime_pct: uptime_with_exclusions(d, excluded, policy),
            fault_time_pct: fault_time(d),
            unreachable_time_pct: unreachable_time(d),
            unavailable_time_pct: unavailable_time(d),
            unknown_time_pct: unknown_time(d),
            fault_reason_pct: fault_reason_time(r),
        });
    }
    Ok(rows)
}

/// Seconds within the window that are both inside an excluded span and in a
/// downtime state (faulted, unreachable, or unavailable).
fn excluded_downtime_seconds(
    timeline: &Timeline,
    spans: &[(Timestamp, Timestamp)],
    window: &PeriodWindow,
) -> u64 {
    let mut total = 0u64;
    let intervals = timeline.intervals();
    for (span_start, span_end) in spans {
        let start = (*span_start).max(window.start);
        let end = (*span_end).min(window.end);
        if start >= end {
            continue;
        }
        let mut i = intervals.partition_point(|iv| iv.end <= start);
        while i < intervals.len() && intervals[i].start < end {
            let iv = &intervals[i];
            if matches!(
                iv.status,
                ChargerStatus::Faulted | ChargerStatus::Unreachable | ChargerStatus::Unavailable
            ) {
                let s = iv.start.max(start).as_secs();
                let e = iv.end.min(end).as_secs();
                total += (e - s).max(0) as u64;
            }
            i += 1;
        }
    }
    total
}
