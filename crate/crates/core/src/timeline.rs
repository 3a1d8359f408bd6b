//! Per-charger state timelines and duration accounting.
//!
//! Point status samples become a step function: a status holds from its
//! sample time until the next sample (last observation carried forward),
//! and the span before the first observation is `unknown`. All duration
//! arithmetic is in integer seconds so the per-state buckets always sum to
//! the window length exactly.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Days, Months, NaiveDate, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ChargerId, ChargerStatus, FaultRecord, FaultReasonDurations, PeriodWindow, StateDurations,
    StateSeconds, StatusSample, Timestamp,
};

/// Reserved reason for faulted time with no fault record at or before it.
pub const UNKNOWN_FAULT_REASON: &str = "unknown-fault";

/// One contiguous run of a single status, over `[start, end)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateInterval {
    pub start: Timestamp,
    pub end: Timestamp,
    pub status: ChargerStatus,
}

/// Contiguous, coalesced status intervals covering one charger's horizon.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Timeline {
    charger: ChargerId,
    intervals: Vec<StateInterval>,
}

impl Timeline {
    /// Wraps pre-built intervals, validating the timeline invariants:
    /// nonempty, contiguous, nonempty segments, adjacent statuses distinct.
    pub fn from_intervals(charger: ChargerId, intervals: Vec<StateInterval>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidValue("timeline has no intervals".into()));
        }
        for window in intervals.windows(2) {
            if window[0].end != window[1].start {
                return Err(Error::InvalidValue(format!(
                    "timeline gap: interval ends at {} but next starts at {}",
                    window[0].end, window[1].start
                )));
            }
            if window[0].status == window[1].status {
                return Err(Error::InvalidValue(
                    "adjacent intervals share a status; coalesce first".into(),
                ));
            }
        }
        for iv in &intervals {
            if iv.start >= iv.end {
                return Err(Error::EmptyHorizon(iv.start.as_secs(), iv.end.as_secs()));
            }
        }
        Ok(Timeline { charger, intervals })
    }

    pub fn charger(&self) -> &ChargerId {
        &self.charger
    }

    pub fn intervals(&self) -> &[StateInterval] {
        &self.intervals
    }

    pub fn horizon(&self) -> (Timestamp, Timestamp) {
        (
            self.intervals.first().expect("nonempty").start,
            self.intervals.last().expect("nonempty").end,
        )
    }

    /// Status at an instant inside the horizon.
    pub fn status_at(&self, at: Timestamp) -> Option<ChargerStatus> {
        let idx = self.intervals.partition_point(|iv| iv.end <= at);
        self.intervals
            .get(idx)
            .filter(|iv| iv.start <= at)
            .map(|iv| iv.status)
    }

    /// The samples that would rebuild this timeline: one per interval start.
    pub fn to_samples(&self) -> Vec<StatusSample> {
        self.intervals
            .iter()
            .map(|iv| StatusSample {
                charger: self.charger.clone(),
                at: iv.start,
                status: iv.status,
            })
            .collect()
    }
}

/// Builds the timeline for one charger over `[t0, t1)`.
///
/// Samples are stably sorted by timestamp (ties keep input order, so the
/// later-inserted sample wins at an instant). Samples at or before `t0`
/// seed the status at `t0`; with no observations the horizon is `unknown`.
pub fn build_timeline(
    charger: &ChargerId,
    samples: &[StatusSample],
    horizon: (Timestamp, Timestamp),
) -> Result<Timeline> {
    let (t0, t1) = horizon;
    if t0 >= t1 {
        return Err(Error::EmptyHorizon(t0.as_secs(), t1.as_secs()));
    }
    if let Some(s) = samples.iter().find(|s| &s.charger != charger) {
        return Err(Error::InvalidValue(format!(
            "sample for charger {} mixed into timeline for {}",
            s.charger, charger
        )));
    }

    let mut sorted: Vec<&StatusSample> = samples.iter().collect();
    sorted.sort_by_key(|s| s.at);

    let mut seed = ChargerStatus::Unknown;
    // change points: strictly increasing times, each with the status holding
    // from that time onward
    let mut points: Vec<(Timestamp, ChargerStatus)> = Vec::new();
    for s in sorted {
        if s.at <= t0 {
            seed = s.status;
        } else if s.at < t1 {
            match points.last_mut() {
                Some((at, status)) if *at == s.at => *status = s.status,
                _ => points.push((s.at, s.status)),
            }
        }
    }

    let mut intervals: Vec<StateInterval> = Vec::with_capacity(points.len() + 1);
    let mut push = |start: Timestamp, end: Timestamp, status: ChargerStatus| {
        if start == end {
            return;
        }
        match intervals.last_mut() {
            Some(last) if last.status == status => last.end = end,
            _ => intervals.push(StateInterval { start, end, status }),
        }
    };

    let mut cursor = (t0, seed);
    for (at, status) in points {
        push(cursor.0, at, cursor.1);
        cursor = (at, status);
    }
    push(cursor.0, t1, cursor.1);

    Timeline::from_intervals(charger.clone(), intervals)
}

/// Reporting grain for metric windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Daily,
    Weekly,
    Monthly,
    Yearly,
    Custom,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Daily => "daily",
            Granularity::Weekly => "weekly",
            Granularity::Monthly => "monthly",
            Granularity::Yearly => "yearly",
            Granularity::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "daily" => Some(Granularity::Daily),
            "weekly" => Some(Granularity::Weekly),
            "monthly" => Some(Granularity::Monthly),
            "yearly" => Some(Granularity::Yearly),
            "custom" => Some(Granularity::Custom),
            _ => None,
        }
    }
}

/// A reporting range plus the calendar grain and timezone used to slice it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodSpec {
    pub granularity: Granularity,
    pub range: (Timestamp, Timestamp),
    /// IANA zone name for calendar boundaries, e.g. `UTC` or
    /// `America/Los_Angeles`.
    pub timezone: String,
}

impl PeriodSpec {
    pub fn new(
        granularity: Granularity,
        range: (Timestamp, Timestamp),
        timezone: impl Into<String>,
    ) -> Result<Self> {
        if range.0 >= range.1 {
            return Err(Error::EmptyHorizon(range.0.as_secs(), range.1.as_secs()));
        }
        Ok(PeriodSpec {
            granularity,
            range,
            timezone: timezone.into(),
        })
    }
}

/// Slices the spec's range into calendar-aligned windows in the spec's
/// timezone. The first and last windows are clipped to the range.
pub fn slice_periods(spec: &PeriodSpec) -> Result<Vec<PeriodWindow>> {
    let (range_start, range_end) = spec.range;
    if range_start >= range_end {
        return Err(Error::EmptyHorizon(range_start.as_secs(), range_end.as_secs()));
    }
    if spec.granularity == Granularity::Custom {
        let label = format!("{}/{}", range_start.to_rfc3339(), range_end.to_rfc3339());
        return Ok(vec![PeriodWindow::new(range_start, range_end, label)?]);
    }

    let tz: Tz = spec
        .timezone
        .parse()
        .map_err(|_| Error::UnknownTimezone(spec.timezone.clone()))?;

    let start_local = utc_to_local_date(range_start, tz);
    let mut boundary = floor_date(start_local, spec.granularity);
    // A DST gap at local midnight can push the floored boundary past the
    // range start; back up until the boundary instant is at or before it.
    while local_midnight_utc(boundary, tz) > range_start {
        boundary = step_back(boundary, spec.granularity);
    }

    let mut windows = Vec::new();
    loop {
        let boundary_utc = local_midnight_utc(boundary, tz);
        if boundary_utc >= range_end {
            break;
        }
        let next = step_forward(boundary, spec.granularity);
        let next_utc = local_midnight_utc(next, tz);
        let start = boundary_utc.max(range_start);
        let end = next_utc.min(range_end);
        if start < end {
            windows.push(PeriodWindow::new(start, end, window_label(boundary, spec.granularity))?);
        }
        boundary = next;
    }
    Ok(windows)
}

fn utc_to_local_date(t: Timestamp, tz: Tz) -> NaiveDate {
    let utc: DateTime<Utc> = DateTime::from_timestamp(t.as_secs(), 0).expect("valid timestamp");
    utc.with_timezone(&tz).date_naive()
}

fn floor_date(date: NaiveDate, granularity: Granularity) -> NaiveDate {
    match granularity {
        Granularity::Daily => date,
        Granularity::Weekly => {
            date - Days::new(u64::from(date.weekday().num_days_from_monday()))
        }
        Granularity::Monthly => date.with_day(1).expect("day 1 exists"),
        Granularity::Yearly => NaiveDate::from_ymd_opt(date.year(), 1, 1).expect("jan 1 exists"),
        Granularity::Custom => date,
    }
}

fn step_forward(date: NaiveDate, granularity: Granularity) -> NaiveDate {
    match granularity {
        Granularity::Daily | Granularity::Custom => date + Days::new(1),
        Granularity::Weekly => date + Days::new(7),
        Granularity::Monthly => date + Months::new(1),
        Granularity::Yearly => date + Months::new(12),
    }
}

fn step_back(date: NaiveDate, granularity: Granularity) -> NaiveDate {
    match granularity {
        Granularity::Daily | Granularity::Custom => date - Days::new(1),
        Granularity::Weekly => date - Days::new(7),
        Granularity::Monthly => date - Months::new(1),
        Granularity::Yearly => date - Months::new(12),
    }
}

fn window_label(boundary: NaiveDate, granularity: Granularity) -> String {
    match granularity {
        Granularity::Daily | Granularity::Custom => boundary.format("%Y-%m-%d").to_string(),
        Granularity::Weekly => boundary.format("%G-W%V").to_string(),
        Granularity::Monthly => boundary.format("%Y-%m").to_string(),
        Granularity::Yearly => boundary.format("%Y").to_string(),
    }
}

/// UTC instant of local midnight on `date`, resolving DST transitions:
/// ambiguous midnights take the earlier instant, and midnights erased by a
/// forward transition take the first valid instant after it.
fn local_midnight_utc(date: NaiveDate, tz: Tz) -> Timestamp {
    use chrono::offset::LocalResult;
    use chrono::TimeZone;
    // probe in 15-minute steps; DST gaps are at most a few hours
    for quarter in 0..=12 {
        let naive = date
            .and_hms_opt(0, 0, 0)
            .expect("midnight exists")
            + chrono::Duration::minutes(15 * quarter);
        match tz.from_local_datetime(&naive) {
            LocalResult::Single(dt) => {
                return Timestamp::from_unix(dt.with_timezone(&Utc).timestamp())
                    .expect("calendar instants are after the epoch")
            }
            LocalResult::Ambiguous(a, b) => {
                let earliest = a.min(b);
                return Timestamp::from_unix(earliest.with_timezone(&Utc).timestamp())
                    .expect("calendar instants are after the epoch");
            }
            LocalResult::None => continue,
        }
    }
    unreachable!("no valid instant within 3h of local midnight on {date} in {tz}")
}

/// Parses a reporting-range bound: an RFC 3339 instant, or a bare
/// `YYYY-MM-DD` date taken at local midnight in `tz`.
pub fn parse_instant(s: &str, tz: Tz) -> Result<Timestamp> {
    if let Ok(t) = Timestamp::parse_rfc3339(s) {
        return Ok(t);
    }
    let date: NaiveDate = s.parse().map_err(|_| {
        Error::InvalidValue(format!(
            "`{s}` is neither an RFC 3339 instant nor a YYYY-MM-DD date"
        ))
    })?;
    Ok(local_midnight_utc(date, tz))
}

fn check_window_in_horizon(timeline: &Timeline, window: &PeriodWindow) -> Result<()> {
    let (h0, h1) = timeline.horizon();
    if window.start < h0 || window.end > h1 {
        return Err(Error::WindowOutsideHorizon {
            label: window.label.clone(),
            start: window.start.as_secs(),
            end: window.end.as_secs(),
        });
    }
    Ok(())
}

fn overlap_seconds(a_start: Timestamp, a_end: Timestamp, b_start: Timestamp, b_end: Timestamp) -> u64 {
    let start = a_start.max(b_start).as_secs();
    let end = a_end.min(b_end).as_secs();
    (end - start).max(0) as u64
}

/// Accounts time per state within one window. Exact in integer seconds;
/// the buckets sum to the window length.
pub fn state_durations(timeline: &Timeline, window: &PeriodWindow) -> Result<StateDurations> {
    check_window_in_horizon(timeline, window)?;
    let mut seconds = StateSeconds::default();
    let intervals = timeline.intervals();
    let first = intervals.partition_point(|iv| iv.end <= window.start);
    for iv in &intervals[first..] {
        if iv.start >= window.end {
            break;
        }
        seconds.add(iv.status, overlap_seconds(iv.start, iv.end, window.start, window.end));
    }
    Ok(StateDurations {
        charger: timeline.charger().clone(),
        window: window.clone(),
        seconds_by_state: seconds,
    })
}

/// [`state_durations`] over many windows in one pass over the timeline.
/// Windows must be sorted by start and non-overlapping (calendar windows
/// are). Equivalent to calling the single-window form per window.
pub fn state_durations_sweep(
    timeline: &Timeline,
    windows: &[PeriodWindow],
) -> Result<Vec<StateDurations>> {
    let intervals = timeline.intervals();
    let mut out = Vec::with_capacity(windows.len());
    let mut idx = 0usize;
    for window in windows {
        check_window_in_horizon(timeline, window)?;
        while idx < intervals.len() && intervals[idx].end <= window.start {
            idx += 1;
        }
        let mut seconds = StateSeconds::default();
        let mut i = idx;
        while i < intervals.len() && intervals[i].start < window.end {
            let iv = &intervals[i];
            seconds.add(iv.status, overlap_seconds(iv.start, iv.end, window.start, window.end));
            if iv.end <= window.end {
                i += 1;
            } else {
                // interval crosses the window end; it may overlap the next
                // window too, so leave the cursor on it
                break;
            }
        }
        idx = i;
        out.push(StateDurations {
            charger: timeline.charger().clone(),
            window: window.clone(),
            seconds_by_state: seconds,
        });
    }
    Ok(out)
}

/// Attributes faulted time within the window to reported fault reasons.
///
/// Every faulted second is attributed to the latest fault record at or
/// before that second; seconds with no prior record get
/// [`UNKNOWN_FAULT_REASON`]. In interval terms each faulted run is split at
/// interior record times and each piece takes the record governing its
/// start. Attribution of a run that starts before the window still uses
/// records from before the window.
pub fn faulted_reason_durations(
    timeline: &Timeline,
    faults: &[FaultRecord],
    window: &PeriodWindow,
) -> FaultReasonDurations {
    let sorted = sorted_faults(faults);
    let mut seconds_by_reason = BTreeMap::new();
    for iv in timeline.intervals() {
        if iv.status != ChargerStatus::Faulted || iv.end <= window.start {
            continue;
        }
        if iv.start >= window.end {
            break;
        }
        attribute_run(
            &sorted,
            iv.start.max(window.start),
            iv.end.min(window.end),
            &mut seconds_by_reason,
        );
    }
    FaultReasonDurations {
        charger: timeline.charger().clone(),
        window: window.clone(),
        seconds_by_reason,
    }
}

/// [`faulted_reason_durations`] over many sorted windows in one pass.
pub fn faulted_reason_durations_sweep(
    timeline: &Timeline,
    faults: &[FaultRecord],
    windows: &[PeriodWindow],
) -> Vec<FaultReasonDurations> {
    let sorted = sorted_faults(faults);
    let mut out: Vec<FaultReasonDurations> = windows
        .iter()
        .map(|w| FaultReasonDurations {
            charger: timeline.charger().clone(),
            window: w.clone(),
            seconds_by_reason: BTreeMap::new(),
        })
        .collect();

    let mut w_idx = 0usize;
    for iv in timeline.intervals() {
        if iv.status != ChargerStatus::Faulted {
            continue;
        }
        while w_idx < windows.len() && windows[w_idx].end <= iv.start {
            w_idx += 1;
        }
        let mut w = w_idx;
        while w < windows.len() && windows[w].start < iv.end {
            let clip_start = iv.start.max(windows[w].start);
            let clip_end = iv.end.min(windows[w].end);
            if clip_start < clip_end {
                attribute_run(&sorted, clip_start, clip_end, &mut out[w].seconds_by_reason);
            }
            w += 1;
        }
    }
    out
}

fn sorted_faults(faults: &[FaultRecord]) -> Vec<&FaultRecord> {
    let mut sorted: Vec<&FaultRecord> = faults.iter().collect();
    sorted.sort_by_key(|f| f.at);
    sorted
}

/// Splits the faulted run `[start, end)` at interior record times and adds
/// each piece's duration to the reason of the record governing its start.
fn attribute_run(
    sorted: &[&FaultRecord],
    start: Timestamp,
    end: Timestamp,
    seconds_by_reason: &mut BTreeMap<String, u64>,
) {
    let mut cursor = start;
    while cursor < end {
        // latest record at or before the cursor (ties resolved to the
        // latest-inserted record by stable sort)
        let idx = sorted.partition_point(|f| f.at <= cursor);
        let reason = if idx == 0 {
            UNKNOWN_FAULT_REASON
        } else {
            sorted[idx - 1].reason.as_str()
        };
        // piece extends to the next record strictly after the cursor
        let piece_end = sorted
            .get(idx)
            .map(|f| f.at.min(end))
            .filter(|at| *at > cursor)
            .unwrap_or(end);
        *seconds_by_reason.entry(reason.to_string()).or_insert(0) +=
            (piece_end.as_secs() - cursor.as_secs()) as u64;
        cursor = piece_end;
    }
}
