//! Ingestion of real charging-session logs from CSV.
//!
//! Logs carry wall-clock timestamps and delivered energy; this module maps
//! them onto the discrete step grid: arrivals round down to the step they
//! fall in, departures round up, and the time origin is midnight of the
//! earliest arrival's day. Rows that cannot be parsed, or whose window is
//! empty after rounding, are dropped and counted rather than failing the
//! whole file.

use std::path::Path;

use chrono::{DateTime, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SessionSpec;

/// Column names and fallback values for session fields the log may lack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestMapping {
    pub arrival_col: String,
    pub departure_col: String,
    pub energy_col: String,
    /// Column holding the charge already in the battery (kWh); absent means
    /// every session starts at `x_initial_default`.
    pub x_initial_col: Option<String>,
    pub u_star_default: f64,
    pub alpha_default: f64,
    pub x_initial_default: f64,
}

impl Default for IngestMapping {
    fn default() -> Self {
        Self {
            arrival_col: "connection_time".to_string(),
            departure_col: "disconnect_time".to_string(),
            energy_col: "kwh_delivered".to_string(),
            x_initial_col: None,
            u_star_default: 6.6,
            alpha_default: 0.0,
            x_initial_default: 0.0,
        }
    }
}

/// Sessions recovered from one CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub sessions: Vec<SessionSpec>,
    /// Smallest horizon that contains every session, or the caller's value.
    pub horizon: usize,
    pub rows_total: usize,
    pub rows_dropped: usize,
}

/// Accepts RFC 3339 (`2024-03-01T08:07:00Z`), RFC 2822, and plain
/// `YYYY-MM-DD HH:MM[:SS]`. Offset-aware values are converted to UTC.
fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    let text = text.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Some(dt.naive_utc());
    }
    if let Ok(dt) = DateTime::parse_from_rfc2822(text) {
        return Some(dt.naive_utc());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(text, fmt) {
            return Some(dt);
        }
    }
    None
}

struct RawRow {
    arrival: NaiveDateTime,
    departure: NaiveDateTime,
    energy: f64,
    x_initial: f64,
}

/// Reads sessions from `path`. `delta` is the step length in hours. With
/// `horizon: Some(h)` the grid is fixed: sessions arriving at or after `h`
/// are dropped and departures are clamped to `h`. With `None` the horizon
/// grows to fit the data.
pub fn ingest_csv(
    path: impl AsRef<Path>,
    mapping: &IngestMapping,
    delta: f64,
    horizon: Option<usize>,
) -> Result<IngestReport> {
    let path = path.as_ref();
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidConfig(
            "step length must be positive".to_string(),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let arrival_idx = col(&mapping.arrival_col)?;
    let departure_idx = col(&mapping.departure_col)?;
    let energy_idx = col(&mapping.energy_col)?;
    let x_initial_idx = match &mapping.x_initial_col {
        Some(name) => Some(col(name)?),
        None => None,
    };

    let mut rows_total = 0usize;
    let mut rows_dropped = 0usize;
    let mut raw: Vec<RawRow> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        rows_total += 1;
        let parsed = (|| -> Option<RawRow> {
            let arrival = parse_timestamp(record.get(arrival_idx)?)?;
            let departure = parse_timestamp(record.get(departure_idx)?)?;
            if departure <= arrival {
                return None;
            }
            let energy: f64 = record.get(energy_idx)?.parse().ok()?;
            if !(energy.is_finite() && energy > 0.0) {
                return None;
            }
            let x_initial = match x_initial_idx {
                Some(idx) => {
                    let v: f64 = record.get(idx)?.parse().ok()?;
                    if !(v.is_finite() && v >= 0.0) {
                        return None;
                    }
                    v
                }
                None => mapping.x_initial_default,
            };
            Some(RawRow {
                arrival,
                departure,
                energy,
                x_initial,
            })
        })();
        match parsed {
            Some(row) => raw.push(row),
            None => rows_dropped += 1,
        }
    }
    if raw.is_empty() {
        return Err(Error::NoValidRows {
            dropped: rows_dropped,
        });
    }

    // Time origin: midnight (UTC) of the earliest arrival's day.
    let first_day = raw.iter().map(|r| r.arrival.date()).min().expect("nonempty");
    let origin = first_day.and_time(NaiveTime::MIN);
    let step_seconds = delta * 3600.0;
    let to_steps = |dt: NaiveDateTime| -> f64 {
        (dt - origin).num_seconds() as f64 / step_seconds
    };

    let mut sessions = Vec::new();
    let mut max_depart = 0usize;
    for row in raw {
        let t_arrival = to_steps(row.arrival).floor() as usize;
        let t_depart = to_steps(row.departure).ceil() as usize;
        if t_depart <= t_arrival {
            rows_dropped += 1; // window collapsed after rounding
            continue;
        }
        let (t_arrival, t_depart) = match horizon {
            Some(h) => {
                if t_arrival >= h {
                    rows_dropped += 1;
                    continue;
                }
                (t_arrival, t_depart.min(h))
            }
            None => (t_arrival, t_depart),
        };
        max_depart = max_depart.max(t_depart);
        sessions.push(SessionSpec {
            id: sessions.len() as u64,
            x_initial: row.x_initial,
            x_final: row.x_initial + row.energy,
            t_arrival,
            t_depart,
            u_star: mapping.u_star_default,
            alpha: mapping.alpha_default,
        });
    }
    if sessions.is_empty() {
        return Err(Error::NoValidRows {
            dropped: rows_dropped,
        });
    }

    let horizon = horizon.unwrap_or(max_depart);
    for s in &sessions {
        s.validate(horizon).map_err(|e| {
            Error::parse(path, format!("ingested session invalid: {e}"))
        })?;
    }
    Ok(IngestReport {
        sessions,
        horizon,
        rows_total,
        rows_dropped,
    })
}
