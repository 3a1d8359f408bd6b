//! Synthetic fleet generation and the per-second verification oracle.
//!
//! The simulator produces a ground-truth state timeline per charger and the
//! matching export files (overview/events/sessions CSVs), generated so the
//! ingestion pipeline reconstructs the truth exactly: every emitted event
//! name classifies correctly under the shipped rules and every transition
//! is one the state machine can replay. The oracle recomputes every metric
//! by brute-force one-second ticks over the truth, independently of the
//! interval engine, so pipeline results can be checked for exact agreement.
//!
//! This is a verification harness, not a statistically faithful model of
//! real charger failure processes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{UnknownPolicy, UptimePolicy};
use crate::model::{
    ts_rfc3339, ChargerId, ChargerStatus, FaultReasonDurations, FaultRecord, MetricsRow,
    PeriodWindow, StateDurations, StateSeconds, Timestamp,
};
use crate::statemachine::{ClassificationRules, EventCategory};
use crate::timeline::{StateInterval, UNKNOWN_FAULT_REASON};

/// Mean dwell seconds per state (exponentially distributed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DwellMeans {
    pub available: f64,
    pub occupied: f64,
    pub faulted: f64,
    pub unreachable: f64,
    pub unavailable: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReasonWeight {
    pub name: String,
    pub weight: f64,
}

/// Relative likelihood of each trouble excursion from the available state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcursionWeights {
    pub faulted: f64,
    pub unreachable: f64,
    pub unavailable: f64,
}

impl Default for ExcursionWeights {
    fn default() -> Self {
        ExcursionWeights {
            faulted: 0.5,
            unreachable: 0.35,
            unavailable: 0.15,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Horizon {
    #[serde(with = "ts_rfc3339")]
    pub start: Timestamp,
    #[serde(with = "ts_rfc3339")]
    pub end: Timestamp,
}

/// A synthetic fleet scenario, loadable from YAML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FleetScenario {
    pub seed: u64,
    pub charger_count: u32,
    pub horizon: Horizon,
    pub dwell_means_seconds: DwellMeans,
    pub fault_reasons: Vec<ReasonWeight>,
    pub session_rate_per_hour: f64,
    /// Fraction of chargers given persistently degraded fault/connectivity
    /// behavior.
    pub zombie_fraction: f64,
    #[serde(default)]
    pub excursion_weights: ExcursionWeights,
    #[serde(default = "default_power_rating")]
    pub power_rating_kw: f64,
}

fn default_power_rating() -> f64 {
    6.0
}

impl FleetScenario {
    pub fn from_yaml_str(text: &str) -> Result<Self> {
        let scenario: FleetScenario = serde_yaml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_yaml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Scenario(msg));
        if self.charger_count == 0 {
            return err("charger_count must be positive".into());
        }
        // zero-padded serials (CH-001..) must sort in fleet order
        if self.charger_count > 999 {
            return err(format!(
                "charger_count {} exceeds the generator's limit of 999",
                self.charger_count
            ));
        }
        if self.horizon.start >= self.horizon.end {
            return err("horizon start must precede end".into());
        }
        let d = &self.dwell_means_seconds;
        for (name, mean) in [
            ("available", d.available),
            ("occupied", d.occupied),
            ("faulted", d.faulted),
            ("unreachable", d.unreachable),
            ("unavailable", d.unavailable),
        ] {
            if !mean.is_finite() || mean <= 0.0 {
                return err(format!("dwell mean `{name}` must be positive, got {mean}"));
            }
        }
        if !self.session_rate_per_hour.is_finite() || self.session_rate_per_hour < 0.0 {
            return err("session_rate_per_hour must be nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.zombie_fraction) {
            return err(format!(
                "zombie_fraction {} must lie in [0, 1]",
                self.zombie_fraction
            ));
        }
        if self.fault_reasons.is_empty() {
            return err("fault_reasons must be nonempty".into());
        }
        let total: f64 = self.fault_reasons.iter().map(|r| r.weight).sum();
        let bad_weight = |w: f64| !w.is_finite() || w < 0.0;
        if self.fault_reasons.iter().any(|r| bad_weight(r.weight)) || total <= 0.0 {
            return err("fault reason weights must be nonnegative with positive total".into());
        }
        let w = &self.excursion_weights;
        let wtotal = w.faulted + w.unreachable + w.unavailable;
        if [w.faulted, w.unreachable, w.unavailable]
            .iter()
            .any(|v| bad_weight(*v))
            || wtotal <= 0.0
        {
            return err("excursion weights must be nonnegative with positive total".into());
        }
        if !self.power_rating_kw.is_finite() || self.power_rating_kw < 0.0 {
            return err("power_rating_kw must be nonnegative".into());
        }
        // reconstructibility: emitted fault names must classify as faults
        let rules = ClassificationRules::shipped_defaults();
        for reason in &self.fault_reasons {
            if rules.classify(&reason.name) != EventCategory::Fault {
                return err(format!(
                    "fault reason `{}` does not classify as a fault under the shipped rules",
                    reason.name
                ));
            }
        }
        Ok(())
    }
}

/// Ground truth for one charger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthCharger {
    pub id: ChargerId,
    pub zombie: bool,
    pub intervals: Vec<StateInterval>,
    pub faults: Vec<FaultRecord>,
}

/// Ground truth for a generated fleet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FleetTruth {
    pub horizon: Horizon,
    pub chargers: Vec<TruthCharger>,
}

/// The export files a generation run produces, as CSV text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExportFiles {
    pub overview: String,
    pub events: String,
    pub sessions: String,
}

/// Generates a fleet: ground-truth timelines plus matching export files.
/// Deterministic given the scenario seed.
pub fn generate_fleet(scenario: &FleetScenario) -> Result<(FleetTruth, ExportFiles)> {
    scenario.validate()?;
    let n = scenario.charger_count as usize;
    let mut master = ChaCha12Rng::seed_from_u64(scenario.seed);

    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut master);
    let zombie_count = (scenario.zombie_fraction * n as f64).round() as usize;
    let mut is_zombie = vec![false; n];
    for &idx in indices.iter().take(zombie_count.min(n)) {
        is_zombie[idx] = true;
    }
    let charger_seeds: Vec<u64> = (0..n).map(|_| master.gen()).collect();

    let mut chargers = Vec::with_capacity(n);
    let mut all_events: Vec<(Timestamp, String, String)> = Vec::new(); // (at, serial, name)
    let mut all_sessions: Vec<(Timestamp, Timestamp, String, String)> = Vec::new();
    let mut overview_rows: Vec<[String; 5]> = Vec::new();

    for idx in 0..n {
        let serial = format!("CH-{:03}", idx + 1);
        let mut rng = ChaCha12Rng::seed_from_u64(charger_seeds[idx]);
        let charger = generate_charger(scenario, &serial, is_zombie[idx], &mut rng)?;

        overview_rows.push([
            serial.clone(),
            format!("Bay {}, 100 Campus Drive", idx + 1),
            format!("{:.5}", 37.42 + idx as f64 * 1e-5),
            format!("{:.5}", -122.17 - idx as f64 * 1e-5),
            initial_status_label(&charger),
        ]);
        for (at, name) in &charger.events {
            all_events.push((*at, serial.clone(), name.clone()));
        }
        for (start, end) in &charger.sessions {
            let hours = (end.as_secs() - start.as_secs()) as f64 / 3600.0;
            let energy = format!("{:.3}", scenario.power_rating_kw * hours);
            all_sessions.push((*start, *end, serial.clone(), energy));
        }
        chargers.push(TruthCharger {
            id: ChargerId::new(&serial).expect("serials are nonempty"),
            zombie: is_zombie[idx],
            intervals: charger.intervals,
            faults: charger.faults,
        });
    }

    all_events.sort_by(|a, b| (a.0, &a.1, &a.2).cmp(&(b.0, &b.1, &b.2)));
    all_sessions.sort_by(|a, b| (a.0, &a.2).cmp(&(b.0, &b.2)));

    let exports = ExportFiles {
        overview: write_csv(
            &["serial_number", "address", "latitude", "longitude", "status"],
            overview_rows.iter().map(|r| r.to_vec()),
        )?,
        events: write_csv(
            &["serial_number", "timestamp", "event_name"],
            all_events
                .iter()
                .map(|(at, serial, name)| vec![serial.clone(), at.to_rfc3339(), name.clone()]),
        )?,
        sessions: write_csv(
            &["serial_number", "start_timestamp", "end_timestamp", "energy_kwh"],
            all_sessions.iter().map(|(start, end, serial, energy)| {
                vec![
                    serial.clone(),
                    start.to_rfc3339(),
                    end.to_rfc3339(),
                    energy.clone(),
                ]
            }),
        )?,
    };

    Ok((
        FleetTruth {
            horizon: scenario.horizon,
            chargers,
        },
        exports,
    ))
}

fn initial_status_label(charger: &GeneratedCharger) -> String {
    match charger.intervals.first().map(|iv| iv.status) {
        Some(ChargerStatus::Faulted) => "Faulted".to_string(),
        _ => "Available".to_string(),
    }
}

struct GeneratedCharger {
    intervals: Vec<StateInterval>,
    faults: Vec<FaultRecord>,
    events: Vec<(Timestamp, String)>,
    sessions: Vec<(Timestamp, Timestamp)>,
}

struct TruthBuilder {
    intervals: Vec<StateInterval>,
    cursor: Timestamp,
}

impl TruthBuilder {
    fn new(start: Timestamp) -> Self {
        TruthBuilder {
            intervals: Vec::new(),
            cursor: start,
        }
    }

    /// Holds `status` from the cursor to `until`, coalescing equal runs.
    fn hold(&mut self, status: ChargerStatus, until: Timestamp) {
        if until <= self.cursor {
            return;
        }
        match self.intervals.last_mut() {
            Some(last) if last.status == status => last.end = until,
            _ => self.intervals.push(StateInterval {
                start: self.cursor,
                end: until,
                status,
            }),
        }
        self.cursor = until;
    }
}

fn sample_exp(rng: &mut ChaCha12Rng, mean_seconds: f64) -> i64 {
    let u: f64 = rng.gen(); // [0, 1)
    // libm keeps the stream identical across platforms
    let v = -mean_seconds * libm::log(1.0 - u);
    v.round().clamp(1.0, 1e15) as i64
}

fn pick_reason<'a>(rng: &mut ChaCha12Rng, reasons: &'a [ReasonWeight]) -> &'a str {
    let total: f64 = reasons.iter().map(|r| r.weight).sum();
    let mut x = rng.gen::<f64>() * total;
    for r in reasons {
        x -= r.weight;
        if x <= 0.0 {
            return &r.name;
        }
    }
    &reasons.last().expect("nonempty").name
}

const REFAULT_PROBABILITY: f64 = 0.25;

fn generate_charger(
    scenario: &FleetScenario,
    serial: &str,
    zombie: bool,
    rng: &mut ChaCha12Rng,
) -> Result<GeneratedCharger> {
    let charger = ChargerId::new(serial).expect("serials are nonempty");
    let (t0, t1) = (scenario.horizon.start, scenario.horizon.end);
    let mut dwell = scenario.dwell_means_seconds.clone();
    if zombie {
        // persistent, slow-to-clear downtime and more frequent excursions
        dwell.faulted *= 24.0;
        dwell.unreachable *= 24.0;
        dwell.available /= 6.0;
    }

    let mut truth = TruthBuilder::new(t0);
    let mut out = GeneratedCharger {
        intervals: Vec::new(),
        faults: Vec::new(),
        events: Vec::new(),
        sessions: Vec::new(),
    };
    let add = |t: Timestamp, secs: i64| {
        Timestamp::from_unix(t.as_secs().saturating_add(secs)).expect("time moves forward")
    };

    // Zombies begin the horizon already faulted, with no fault record yet
    // reported; that head segment attributes to the unknown-fault reason.
    if zombie {
        let head_end = add(t0, sample_exp(rng, dwell.faulted)).min(t1);
        maybe_refault(rng, scenario, &charger, t0, head_end, &mut out);
        truth.hold(ChargerStatus::Faulted, head_end);
        if head_end < t1 {
            out.events.push((head_end, "Fault Cleared".to_string()));
        }
    }

    let session_mean_s = if scenario.session_rate_per_hour > 0.0 {
        Some(3600.0 / scenario.session_rate_per_hour)
    } else {
        None
    };

    while truth.cursor < t1 {
        let t = truth.cursor;
        let to_session = session_mean_s.map(|mean| sample_exp(rng, mean));
        let to_trouble = sample_exp(rng, dwell.available);

        if let Some(to_session) = to_session.filter(|s| *s <= to_trouble) {
            let start = add(t, to_session);
            if start >= t1 {
                truth.hold(ChargerStatus::Available, t1);
                break;
            }
            let end = add(start, sample_exp(rng, dwell.occupied));
            if end >= t1 {
                // a session still in progress at export time has no end row;
                // leave the charger idle instead
                truth.hold(ChargerStatus::Available, t1);
                break;
            }
            truth.hold(ChargerStatus::Available, start);
            truth.hold(ChargerStatus::Occupied, end);
            out.sessions.push((start, end));
        } else {
            let enter = add(t, to_trouble);
            if enter >= t1 {
                truth.hold(ChargerStatus::Available, t1);
                break;
            }
            truth.hold(ChargerStatus::Available, enter);

            let w = &scenario.excursion_weights;
            let total = w.faulted + w.unreachable + w.unavailable;
            let x = rng.gen::<f64>() * total;
            let (status, dwell_mean) = if x < w.faulted {
                (ChargerStatus::Faulted, dwell.faulted)
            } else if x < w.faulted + w.unreachable {
                (ChargerStatus::Unreachable, dwell.unreachable)
            } else {
                (ChargerStatus::Unavailable, dwell.unavailable)
            };
            let exit = add(enter, sample_exp(rng, dwell_mean));
            let clipped_exit = exit.min(t1);

            match status {
                ChargerStatus::Faulted => {
                    let reason = pick_reason(rng, &scenario.fault_reasons).to_string();
                    out.events.push((enter, reason.clone()));
                    out.faults
                        .push(FaultRecord::new(charger.clone(), enter, reason)?);
                    maybe_refault(rng, scenario, &charger, enter, clipped_exit, &mut out);
                    if exit < t1 {
                        out.events.push((exit, "Fault Cleared".to_string()));
                    }
                }
                ChargerStatus::Unreachable => {
                    out.events
                        .push((enter, "Network Connection Lost".to_string()));
                    if exit < t1 {
                        out.events
                            .push((exit, "Network Connection Restored".to_string()));
                    }
                }
                ChargerStatus::Unavailable => {
                    out.events.push((enter, "Power Off".to_string()));
                    if exit < t1 {
                        out.events.push((exit, "Power On".to_string()));
                    }
                }
                _ => unreachable!(),
            }
            truth.hold(status, clipped_exit);
        }
    }

    out.intervals = truth.intervals;
    Ok(out)
}

/// Occasionally reports a second fault mid-way through a faulted segment.
/// The state machine sees a fault event in the faulted state (no status
/// change); attribution splits the segment at the new record.
fn maybe_refault(
    rng: &mut ChaCha12Rng,
    scenario: &FleetScenario,
    charger: &ChargerId,
    seg_start: Timestamp,
    seg_end: Timestamp,
    out: &mut GeneratedCharger,
) {
    if seg_end.as_secs() - seg_start.as_secs() < 4 {
        return;
    }
    if rng.gen::<f64>() >= REFAULT_PROBABILITY {
        return;
    }
    let at = Timestamp::from_unix(
        rng.gen_range(seg_start.as_secs() + 1..seg_end.as_secs()),
    )
    .expect("inside a valid segment");
    let reason = pick_reason(rng, &scenario.fault_reasons).to_string();
    out.events.push((at, reason.clone()));
    out.faults.push(
        FaultRecord::new(charger.clone(), at, reason).expect("catalog reasons are nonempty"),
    );
}

fn write_csv(
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(header)
        .and_then(|_| {
            for row in rows {
                writer.write_record(&row)?;
            }
            Ok(())
        })
        .map_err(|e| Error::Csv {
            path: "<generated>".into(),
            source: e,
        })?;
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::InvalidValue(format!("csv flush failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One oracle result: exact durations and the derived metric row.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleRow {
    pub durations: StateDurations,
    pub reasons: FaultReasonDurations,
    pub metrics: MetricsRow,
}

/// Brute-force per-second metrics over ground truth.
///
/// Walks every second of every window, classifying each tick's state and
/// fault reason independently of the interval engine: a tick's reason is
/// that of the latest fault record at or before it. Windows must be sorted
/// and lie within the truth horizon.
pub fn oracle_metrics(
    truth: &FleetTruth,
    windows: &[PeriodWindow],
    policy: &UptimePolicy,
) -> Result<Vec<OracleRow>> {
    policy.validate()?;
    let mut out = Vec::with_capacity(truth.chargers.len() * windows.len());
    for charger in &truth.chargers {
        // intern reasons; index 0 is the reserved unknown-fault reason
        let mut reason_names: Vec<&str> = vec![UNKNOWN_FAULT_REASON];
        let mut fault_times: Vec<i64> = Vec::with_capacity(charger.faults.len());
        let mut fault_reason_idx: Vec<usize> = Vec::with_capacity(charger.faults.len());
        let mut sorted: Vec<&FaultRecord> = charger.faults.iter().collect();
        sorted.sort_by_key(|f| f.at);
        for f in sorted {
            let idx = reason_names
                .iter()
                .position(|n| *n == f.reason)
                .unwrap_or_else(|| {
                    reason_names.push(&f.reason);
                    reason_names.len() - 1
                });
            fault_times.push(f.at.as_secs());
            fault_reason_idx.push(idx);
        }

        let mut excluded_spans: Vec<(i64, i64)> = policy
            .excluded_intervals
            .iter()
            .filter(|e| e.charger == charger.id)
            .map(|e| (e.start.as_secs(), e.end.as_secs()))
            .collect();
        excluded_spans.sort_unstable();

        for window in windows {
            let (h0, h1) = (
                charger.intervals.first().map(|iv| iv.start),
                charger.intervals.last().map(|iv| iv.end),
            );
            if h0.is_none_or(|h| window.start < h) || h1.is_none_or(|h| window.end > h) {
                return Err(Error::WindowOutsideHorizon {
                    label: window.label.clone(),
                    start: window.start.as_secs(),
                    end: window.end.as_secs(),
                });
            }

            let mut seconds = StateSeconds::default();
            let mut reason_seconds = vec![0u64; reason_names.len()];
            let mut excluded_downtime = 0u64;

            let w_start = window.start.as_secs();
            let w_end = window.end.as_secs();
            let mut iv_idx = charger
                .intervals
                .partition_point(|iv| iv.end.as_secs() <= w_start);
            let mut fault_idx = fault_times.partition_point(|at| *at <= w_start);
            let mut excl_idx = excluded_spans.partition_point(|(_, end)| *end <= w_start);

            let mut t = w_start;
            while t < w_end {
                while charger.intervals[iv_idx].end.as_secs() <= t {
                    iv_idx += 1;
                }
                while fault_idx < fault_times.len() && fault_times[fault_idx] <= t {
                    fault_idx += 1;
                }
                let state = charger.intervals[iv_idx].status;
                seconds.add(state, 1);
                if state == ChargerStatus::Faulted {
                    let reason = if fault_idx == 0 {
                        0
                    } else {
                        fault_reason_idx[fault_idx - 1]
                    };
                    reason_seconds[reason] += 1;
                }
                if !excluded_spans.is_empty() {
                    while excl_idx < excluded_spans.len() && excluded_spans[excl_idx].1 <= t {
                        excl_idx += 1;
                    }
                    if excl_idx < excluded_spans.len()
                        && excluded_spans[excl_idx].0 <= t
                        && matches!(
                            state,
                            ChargerStatus::Faulted
                                | ChargerStatus::Unreachable
                                | ChargerStatus::Unavailable
                        )
                    {
                        excluded_downtime += 1;
                    }
                }
                t += 1;
            }

            out.push(build_oracle_row(
                &charger.id,
                window,
                seconds,
                &reason_names,
                &reason_seconds,
                excluded_downtime,
                policy,
            ));
        }
    }
    Ok(out)
}

fn build_oracle_row(
    charger: &ChargerId,
    window: &PeriodWindow,
    seconds: StateSeconds,
    reason_names: &[&str],
    reason_seconds: &[u64],
    excluded_downtime: u64,
    policy: &UptimePolicy,
) -> OracleRow {
    let total = window.duration_seconds();
    let pct = |secs: u64, denom: u64| secs as f64 / denom as f64 * 100.0;

    let unknown = seconds.get(ChargerStatus::Unknown);
    let up = seconds.get(ChargerStatus::Occupied) + seconds.get(ChargerStatus::Available);
    let (numer, denom) = match policy.unknown_policy {
        UnknownPolicy::NotUp => (up + excluded_downtime, total),
        UnknownPolicy::CountAsUp => (up + unknown + excluded_downtime, total),
        UnknownPolicy::ExcludeFromDenominator => (up + excluded_downtime, total - unknown),
    };
    let uptime_pct = if denom == 0 { None } else { Some(pct(numer, denom)) };

    let faulted_total: u64 = reason_seconds.iter().sum();
    let mut seconds_by_reason = std::collections::BTreeMap::new();
    let mut fault_reason_pct = std::collections::BTreeMap::new();
    for (name, secs) in reason_names.iter().zip(reason_seconds) {
        if *secs > 0 {
            seconds_by_reason.insert(name.to_string(), *secs);
            fault_reason_pct.insert(name.to_string(), pct(*secs, faulted_total));
        }
    }

    OracleRow {
        durations: StateDurations {
            charger: charger.clone(),
            window: window.clone(),
            seconds_by_state: seconds,
        },
        reasons: FaultReasonDurations {
            charger: charger.clone(),
            window: window.clone(),
            seconds_by_reason,
        },
        metrics: MetricsRow {
            charger: charger.clone(),
            window: window.clone(),
            uptime_pct,
            fault_time_pct: pct(seconds.get(ChargerStatus::Faulted), total),
            unreachable_time_pct: pct(seconds.get(ChargerStatus::Unreachable), total),
            unavailable_time_pct: pct(seconds.get(ChargerStatus::Unavailable), total),
            unknown_time_pct: pct(unknown, total),
            fault_reason_pct,
        },
    }
}
