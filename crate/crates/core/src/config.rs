//! YAML configuration: store location, data sources, event classification
//! rules, site timezone, uptime policy, and report defaults.
//!
//! Relative paths in a config file are resolved against the directory the
//! file lives in, so a config travels with its data.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::adapter::ExportAdapter;
use crate::error::{Error, Result};
use crate::metrics::{ExcludedInterval, UnknownPolicy, UptimePolicy};
use crate::model::{ts_rfc3339, ChargerId, Timestamp};
use crate::statemachine::{ClassificationRule, ClassificationRules, EventCategory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    /// Adapter name; `export` is the built-in CSV export adapter.
    pub adapter: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub settings: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedIntervalConfig {
    pub charger: String,
    #[serde(with = "ts_rfc3339")]
    pub start: Timestamp,
    #[serde(with = "ts_rfc3339")]
    pub end: Timestamp,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    #[serde(default)]
    pub unknown: UnknownPolicy,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded_intervals: Vec<ExcludedIntervalConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    /// A charger absent from every station overview for this long is
    /// treated as decommissioned in later windows.
    #[serde(default = "default_decommission_days")]
    pub decommission_horizon_days: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_decommission_days() -> u32 {
    90
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            decommission_horizon_days: default_decommission_days(),
            output_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub store_path: PathBuf,
    #[serde(default = "default_timezone")]
    pub site_timezone: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<SourceConfig>,
    /// Ordered classification rules; when present they replace the shipped
    /// defaults entirely.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_rules: Option<Vec<ClassificationRule>>,
    #[serde(default)]
    pub uptime_policy: PolicyConfig,
    #[serde(default)]
    pub report: ReportConfig,
    /// Extraction scheduling hints for external schedulers; informational.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<BTreeMap<String, String>>,
}

fn default_timezone() -> String {
    "UTC".to_string()
}

impl Config {
    /// Loads, resolves relative paths against the config's directory, and
    /// validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: Config = serde_yaml::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    /// Minimal in-memory config for embedding and tests.
    pub fn for_store(store_path: impl Into<PathBuf>) -> Self {
        Config {
            store_path: store_path.into(),
            site_timezone: default_timezone(),
            sources: Vec::new(),
            event_rules: None,
            uptime_policy: PolicyConfig::default(),
            report: ReportConfig::default(),
            schedule: None,
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.store_path);
        for source in &mut self.sources {
            for input in &mut source.inputs {
                resolve(input);
            }
        }
        if let Some(dir) = &mut self.report.output_dir {
            resolve(dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.site_timezone
            .parse::<Tz>()
            .map_err(|_| Error::UnknownTimezone(self.site_timezone.clone()))?;
        for source in &self.sources {
            if source.adapter != ExportAdapter::NAME {
                return Err(Error::Config(format!(
                    "unknown adapter `{}` (available: {})",
                    source.adapter,
                    ExportAdapter::NAME
                )));
            }
        }
        self.policy()?.validate()?;
        Ok(())
    }

    pub fn timezone(&self) -> Result<Tz> {
        self.site_timezone
            .parse()
            .map_err(|_| Error::UnknownTimezone(self.site_timezone.clone()))
    }

    /// Classification rules: configured ones, or the shipped defaults.
    pub fn rules(&self) -> ClassificationRules {
        match &self.event_rules {
            Some(rules) => ClassificationRules::new(rules.clone(), EventCategory::Informational),
            None => ClassificationRules::shipped_defaults(),
        }
    }

    pub fn policy(&self) -> Result<UptimePolicy> {
        let mut excluded_intervals = Vec::with_capacity(self.uptime_policy.excluded_intervals.len());
        for e in &self.uptime_policy.excluded_intervals {
            excluded_intervals.push(ExcludedInterval {
                charger: ChargerId::new(&e.charger)?,
                start: e.start,
                end: e.end,
            });
        }
        Ok(UptimePolicy {
            unknown_policy: self.uptime_policy.unknown,
            excluded_intervals,
        })
    }
}
