//! Persistence for simulation outputs: a JSON record pairing the scenario
//! with the full result, and a flat per-step CSV trace for plotting.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scenario::{Scenario, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::sim::{PerStepRow, ScenarioResult};

/// One simulated policy on one scenario, self-contained for later analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub result: ScenarioResult,
}

impl RunRecord {
    pub fn new(scenario: Scenario, result: ScenarioResult) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario,
            result,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::parse(path, e.to_string()))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let record: RunRecord =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        if record.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion(record.schema_version));
        }
        Ok(record)
    }
}

/// Writes the per-step trace as CSV with a fixed header. Output is
/// byte-deterministic for equal input.
pub fn write_per_step_csv(path: impl AsRef<Path>, rows: &[PerStepRow]) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::parse(path, e.to_string()))?;
    }
    if rows.is_empty() {
        // serialize() derives the header from the first row; write it
        // explicitly so empty traces still produce a well-formed file.
        writer
            .write_record(["t", "capacity_kw", "commanded_kw", "applied_kw", "active_count"])
            .map_err(|e| Error::parse(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_per_step_csv(path: impl AsRef<Path>) -> Result<Vec<PerStepRow>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let row: PerStepRow = record.map_err(|e| Error::parse(path, e.to_string()))?;
        rows.push(row);
    }
    Ok(rows)
}
