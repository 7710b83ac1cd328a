//! Scenario container: everything needed to reproduce one simulation run,
//! serialized as JSON.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SessionSpec, StationConfig};

/// Version tag written into every scenario and result file.
pub const SCHEMA_VERSION: u32 = 1;

/// Station capacity, either one constant value or one value per step (kW).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CapacitySpec {
    Constant(f64),
    Profile(Vec<f64>),
}

/// Provenance of a scenario. Purely informational; nothing downstream
/// depends on it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Name of the random-number generator family used, e.g. "chacha8".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub congestion_ratio: Option<f64>,
    /// Where the sessions came from: "generated", or the ingested file name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<super::generate::GeneratorParams>,
}

/// A complete simulation input: station shape plus charging sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub metadata: Metadata,
    /// Step length in hours.
    pub delta: f64,
    pub capacity: CapacitySpec,
    /// Number of steps.
    pub horizon: usize,
    pub sessions: Vec<SessionSpec>,
}

impl Scenario {
    /// Expands the capacity spec into a validated per-step station config.
    pub fn station_config(&self) -> Result<StationConfig> {
        let capacity = match &self.capacity {
            CapacitySpec::Constant(p) => vec![*p; self.horizon],
            CapacitySpec::Profile(profile) => {
                if profile.len() != self.horizon {
                    return Err(Error::InvalidConfig(format!(
                        "capacity profile has {} entries for horizon {}",
                        profile.len(),
                        self.horizon
                    )));
                }
                profile.clone()
            }
        };
        StationConfig::new(capacity, self.delta)
    }

    /// Checks schema version, station shape, session validity, and id
    /// uniqueness.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion(self.schema_version));
        }
        self.station_config()?;
        let mut ids: Vec<u64> = self.sessions.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        for pair in ids.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::InvalidSession {
                    id: pair[0],
                    reason: "duplicate session id".to_string(),
                });
            }
        }
        for s in &self.sessions {
            s.validate(self.horizon)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::parse(path, e.to_string()))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    /// Loads and validates a scenario file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scenario: Scenario =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Number of plugged-in vehicles at each step.
pub fn occupancy(sessions: &[SessionSpec], horizon: usize) -> Vec<usize> {
    let mut counts = vec![0usize; horizon];
    for s in sessions {
        for slot in counts
            .iter_mut()
            .take(s.t_depart.min(horizon))
            .skip(s.t_arrival)
        {
            *slot += 1;
        }
    }
    counts
}

/// Maximum simultaneous occupancy, at least 1 (so capacity formulas stay
/// meaningful for empty scenarios).
pub fn peak_concurrency(sessions: &[SessionSpec], horizon: usize) -> usize {
    occupancy(sessions, horizon).into_iter().max().unwrap_or(0).max(1)
}
