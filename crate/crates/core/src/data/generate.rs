//! Synthetic scenario generation.
//!
//! Arrivals are Poisson draws against a per-step intensity profile; stays,
//! initial charge, and requested energy are uniform. Station capacity is
//! sized from the realized peak occupancy through a congestion ratio, so the
//! same knob produces comparable load across seeds and profiles.
//!
//! Determinism: all randomness flows through one ChaCha8 stream seeded from
//! `params.seed`, with a fixed draw order (per step: arrival count, then per
//! arrival: stay, initial charge, energy). Equal params produce byte-equal
//! scenarios on every platform.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{peak_concurrency, CapacitySpec, Metadata, Scenario, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::model::SessionSpec;

/// Expected arrivals per step, as a profile over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ArrivalIntensity {
    /// Gaussian bump centered at a third of the horizon with spread a
    /// twelfth of it, scaled so the profile sums to `expected_total`.
    MorningPeak { expected_total: f64 },
    /// Flat profile summing to `expected_total`.
    Constant { expected_total: f64 },
    /// Explicit expected arrivals per step; length must equal the horizon.
    PerStep { rates: Vec<f64> },
}

impl ArrivalIntensity {
    /// Expands to one expected-arrivals value per step.
    fn profile(&self, horizon: usize) -> Result<Vec<f64>> {
        match self {
            ArrivalIntensity::MorningPeak { expected_total } => {
                let center = horizon as f64 / 3.0;
                let sigma = horizon as f64 / 12.0;
                let g: Vec<f64> = (0..horizon)
                    .map(|t| {
                        let z = (t as f64 - center) / sigma;
                        (-0.5 * z * z).exp()
                    })
                    .collect();
                let total: f64 = g.iter().sum();
                Ok(g.into_iter().map(|v| expected_total * v / total).collect())
            }
            ArrivalIntensity::Constant { expected_total } => {
                Ok(vec![expected_total / horizon as f64; horizon])
            }
            ArrivalIntensity::PerStep { rates } => {
                if rates.len() != horizon {
                    return Err(Error::InvalidParams(format!(
                        "per-step intensity has {} entries for horizon {}",
                        rates.len(),
                        horizon
                    )));
                }
                Ok(rates.clone())
            }
        }
    }

    fn is_valid(&self) -> bool {
        match self {
            ArrivalIntensity::MorningPeak { expected_total }
            | ArrivalIntensity::Constant { expected_total } => {
                expected_total.is_finite() && *expected_total >= 0.0
            }
            ArrivalIntensity::PerStep { rates } => {
                rates.iter().all(|r| r.is_finite() && *r >= 0.0)
            }
        }
    }
}

/// Knobs for [`generate`]. The defaults describe a morning-peaked workplace
/// lot: 96 quarter-hour steps, ~20 arrivals, stays of 4–10 hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    pub horizon: usize,
    /// Step length in hours.
    pub delta: f64,
    pub intensity: ArrivalIntensity,
    /// Inclusive bounds on how many steps a vehicle stays.
    pub stay_steps: (usize, usize),
    /// Uniform bounds on charge already in the battery at arrival (kWh).
    pub x_initial_range: (f64, f64),
    /// Uniform bounds on requested energy (kWh).
    pub energy_range: (f64, f64),
    /// Nameplate peak rate (kW).
    pub u_star: f64,
    /// Peak-rate decay per kWh of charge (kW/kWh).
    pub alpha: f64,
    /// Station capacity as a fraction of `u_star` times realized peak
    /// occupancy.
    pub congestion_ratio: f64,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            horizon: 96,
            delta: 0.25,
            intensity: ArrivalIntensity::MorningPeak {
                expected_total: 20.0,
            },
            stay_steps: (16, 40),
            x_initial_range: (5.0, 20.0),
            energy_range: (5.0, 25.0),
            u_star: 6.6,
            alpha: 0.1,
            congestion_ratio: 0.5,
            seed: 0,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        let err = |reason: &str| Err(Error::InvalidParams(reason.to_string()));
        if self.horizon == 0 {
            return err("horizon must be at least 1 step");
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return err("delta must be a positive number of hours");
        }
        if !self.intensity.is_valid() {
            return err("arrival intensity must be finite and nonnegative");
        }
        self.intensity.profile(self.horizon)?;
        if self.stay_steps.0 < 1 || self.stay_steps.0 > self.stay_steps.1 {
            return err("stay bounds must satisfy 1 <= min <= max");
        }
        let finite_range = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !finite_range(self.x_initial_range) || self.x_initial_range.0 < 0.0 {
            return err("initial-charge bounds must be finite, ordered, and nonnegative");
        }
        if !finite_range(self.energy_range) || self.energy_range.0 < 0.0 {
            return err("energy bounds must be finite, ordered, and nonnegative");
        }
        if !(self.u_star.is_finite() && self.u_star > 0.0) {
            return err("u_star must be positive");
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return err("alpha must be nonnegative");
        }
        // Every generated session must keep a positive peak rate at its
        // target, otherwise it could never finish even alone.
        let x_final_max = self.x_initial_range.1 + self.energy_range.1;
        if self.u_star - self.alpha * x_final_max <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "u_star - alpha * max final charge = {:.3} kW; raise u_star or lower alpha",
                self.u_star - self.alpha * x_final_max
            )));
        }
        if !(self.congestion_ratio.is_finite() && self.congestion_ratio > 0.0) {
            return err("congestion ratio must be positive");
        }
        Ok(())
    }
}

/// Deterministic uniform helpers over a ChaCha8 stream.
struct Draw(ChaCha8Rng);

impl Draw {
    fn new(seed: u64) -> Self {
        Draw(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in [0, 1) with 53 random bits.
    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.unit() * (hi - lo)
    }

    /// Uniform integer in `lo..=hi`.
    fn uniform_usize(&mut self, lo: usize, hi: usize) -> usize {
        let span = (hi - lo + 1) as f64;
        (lo + (self.unit() * span) as usize).min(hi)
    }

    /// Poisson draw by inverse products; zero intensity consumes no
    /// randomness.
    fn poisson(&mut self, lambda: f64) -> usize {
        if lambda <= 0.0 {
            return 0;
        }
        let limit = (-lambda).exp();
        let mut k = 0usize;
        let mut p = 1.0f64;
        loop {
            p *= self.unit();
            if p <= limit {
                return k;
            }
            k += 1;
        }
    }
}

/// Generates a scenario from `params`. Same params, same bytes.
pub fn generate(params: &GeneratorParams) -> Result<Scenario> {
    params.validate()?;
    let profile = params.intensity.profile(params.horizon)?;
    let mut draw = Draw::new(params.seed);

    let mut sessions = Vec::new();
    for (t, &lambda) in profile.iter().enumerate() {
        let arrivals = draw.poisson(lambda);
        for _ in 0..arrivals {
            let stay = draw.uniform_usize(params.stay_steps.0, params.stay_steps.1);
            let x_initial = draw.uniform(params.x_initial_range.0, params.x_initial_range.1);
            let energy = draw.uniform(params.energy_range.0, params.energy_range.1);
            // `t < horizon` and `stay >= 1`, so the clamped window is
            // never empty.
            let t_depart = (t + stay).min(params.horizon);
            sessions.push(SessionSpec {
                id: sessions.len() as u64,
                x_initial,
                x_final: x_initial + energy,
                t_arrival: t,
                t_depart,
                u_star: params.u_star,
                alpha: params.alpha,
            });
        }
    }

    let peak = peak_concurrency(&sessions, params.horizon);
    let capacity = params.congestion_ratio * params.u_star * peak as f64;

    let scenario = Scenario {
        schema_version: SCHEMA_VERSION,
        metadata: Metadata {
            name: None,
            seed: Some(params.seed),
            rng: Some("chacha8".to_string()),
            congestion_ratio: Some(params.congestion_ratio),
            source: Some("generated".to_string()),
            generator: Some(params.clone()),
        },
        delta: params.delta,
        capacity: CapacitySpec::Constant(capacity),
        horizon: params.horizon,
        sessions,
    };
    scenario.validate()?;
    Ok(scenario)
}
