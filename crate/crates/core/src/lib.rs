//! Reliability analytics for EV charging sites.
//!
//! The engine ingests raw charger telemetry exports into an append-only
//! store, normalizes them into a charger information model via an
//! event-driven state machine, reconstructs per-charger operational-state
//! timelines, and computes uptime, fault-time, fault-reason, and
//! unreachable-time metrics over configurable calendar windows, with
//! per-charger and site-wide report exports.
//!
//! Module map:
//! - [`model`]: the normalized information model and metric types
//! - [`rawstore`] / [`modelstore`] / [`store`]: the single-file store
//! - [`adapter`]: source-system integration (CSV export adapter)
//! - [`statemachine`]: event classification, transitions, normalization
//! - [`timeline`]: state intervals and duration accounting
//! - [`metrics`]: the metric formulas
//! - [`report`]: site aggregation and exports
//! - [`simulator`]: synthetic fleets and the per-second oracle
//! - [`pipeline`]: the end-to-end operations the CLI fronts

pub mod adapter;
pub mod config;
pub mod error;
pub mod metrics;
pub mod model;
pub mod modelstore;
pub mod pipeline;
pub mod rawstore;
pub mod report;
pub mod simulator;
pub mod statemachine;
pub mod store;
pub mod timeline;

pub use error::{Error, Result};
pub use model::{
    ChargerId, ChargerMetadata, ChargerStatus, ChargingSession, FaultReasonDurations, FaultRecord,
    MetricsRow, PeriodWindow, StateDurations, StateSeconds, StatusSample, Timestamp,
};
pub use store::Store;
