//! Shared fixtures for the engine benchmarks.

use chargestat_core::model::{ChargerId, ChargerStatus, StatusSample, Timestamp};
use chargestat_core::simulator::{DwellMeans, ExcursionWeights, FleetScenario, Horizon, ReasonWeight};

pub const YEAR_SECONDS: i64 = 366 * 86_400;

/// A deterministic fleet scenario sized for benchmarking.
pub fn bench_scenario(charger_count: u32, days: i64) -> FleetScenario {
    let start = Timestamp::parse_rfc3339("2024-01-01T00:00:00Z").unwrap();
    let end = Timestamp::from_unix(start.as_secs() + days * 86_400).unwrap();
    FleetScenario {
        seed: 1234,
        charger_count,
        horizon: Horizon { start, end },
        dwell_means_seconds: DwellMeans {
            available: 14_400.0,
            occupied: 3_600.0,
            faulted: 14_400.0,
            unreachable: 5_400.0,
            unavailable: 10_800.0,
        },
        fault_reasons: vec![
            ReasonWeight { name: "Tamper Detect".into(), weight: 1.0 },
            ReasonWeight { name: "Hardware Fault".into(), weight: 2.0 },
            ReasonWeight { name: "Maintenance Required".into(), weight: 3.0 },
        ],
        session_rate_per_hour: 0.1,
        zombie_fraction: 0.1,
        excursion_weights: ExcursionWeights::default(),
        power_rating_kw: 6.0,
    }
}

/// `count` status samples cycling through the states, spread evenly over a
/// leap year starting at the epoch-aligned 2024 boundary.
pub fn synthetic_samples(count: usize) -> (ChargerId, Vec<StatusSample>, (Timestamp, Timestamp)) {
    let charger = ChargerId::new("CH-BENCH").unwrap();
    let start = Timestamp::parse_rfc3339("2024-01-01T00:00:00Z").unwrap();
    let end = Timestamp::from_unix(start.as_secs() + YEAR_SECONDS).unwrap();
    let step = YEAR_SECONDS / count as i64;
    let samples = (0..count)
        .map(|i| StatusSample {
            charger: charger.clone(),
            at: Timestamp::from_unix(start.as_secs() + i as i64 * step).unwrap(),
            status: ChargerStatus::ALL[i % 5], // skip unknown: keep runs distinct
        })
        .collect();
    (charger, samples, (start, end))
}
