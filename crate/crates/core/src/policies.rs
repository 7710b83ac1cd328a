//! Dispatch policies: given the station state at a step, decide a charging
//! rate for every vehicle.
//!
//! Two heuristics act step by step (equal share, earliest deadline first);
//! two optimizers plan over the remaining horizon and are re-run by the
//! simulator whenever the active set changes. The heuristics consult a
//! [`RateLimitModel`] for each vehicle's rate cap: `Nominal` uses the
//! nameplate limit (what a deployed controller knows without battery
//! telemetry), `TrueSoc` uses the state-of-charge-dependent peak rate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{peak_rate, ActiveSet, BatteryState, SessionSpec, StationConfig};
use crate::solver::{
    build_mpc_program, build_soc_mpc_program, solve, SolveStatus, SolverOptions,
};

/// The four dispatch policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Split the current capacity equally among active vehicles,
    /// water-filling around rate caps.
    EqualShare,
    /// Serve vehicles in deadline order, each up to its cap, until capacity
    /// runs out.
    EarliestDeadline,
    /// Receding-horizon optimizer that plans against fixed nameplate rate
    /// limits.
    Mpc,
    /// Receding-horizon optimizer whose rate limits tighten with the battery
    /// state projected along the plan itself.
    SocMpc,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::EqualShare,
        PolicyKind::EarliestDeadline,
        PolicyKind::Mpc,
        PolicyKind::SocMpc,
    ];

    /// Whether the policy plans ahead (and so needs re-solving on events)
    /// rather than deciding step by step.
    pub fn is_receding_horizon(self) -> bool {
        matches!(self, PolicyKind::Mpc | PolicyKind::SocMpc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::EqualShare => "es",
            PolicyKind::EarliestDeadline => "edf",
            PolicyKind::Mpc => "mpc",
            PolicyKind::SocMpc => "soc_mpc",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "es" | "equal_share" | "equal-share" => Ok(PolicyKind::EqualShare),
            "edf" | "earliest_deadline" | "earliest-deadline" => Ok(PolicyKind::EarliestDeadline),
            "mpc" => Ok(PolicyKind::Mpc),
            "soc_mpc" | "soc-mpc" => Ok(PolicyKind::SocMpc),
            other => Err(Error::UnknownPolicy(other.to_string())),
        }
    }
}

/// Which per-vehicle rate cap the step-by-step heuristics assume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateLimitModel {
    /// Fixed nameplate limit `u_star`; commands above the true peak rate get
    /// clipped by the hardware.
    #[default]
    Nominal,
    /// The state-dependent peak rate `max(u_star - alpha * x, 0)`.
    TrueSoc,
}

impl FromStr for RateLimitModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nominal" => Ok(RateLimitModel::Nominal),
            "true-soc" | "true_soc" | "soc" => Ok(RateLimitModel::TrueSoc),
            other => Err(Error::InvalidConfig(format!(
                "unknown rate-limit model `{other}` (expected nominal or true-soc)"
            ))),
        }
    }
}

fn rate_cap(spec: &SessionSpec, state: &BatteryState, model: RateLimitModel) -> f64 {
    match model {
        RateLimitModel::Nominal => spec.u_star,
        RateLimitModel::TrueSoc => peak_rate(spec, state.x),
    }
}

/// Splits `capacity` equally among participants, redistributing any share a
/// capped participant cannot take. `caps` must be nonnegative. Returns one
/// rate per cap, in order.
pub fn water_fill(caps: &[f64], capacity: f64) -> Vec<f64> {
    let mut rates = vec![0.0; caps.len()];
    if caps.is_empty() || capacity <= 0.0 {
        return rates;
    }
    let mut order: Vec<usize> = (0..caps.len()).collect();
    order.sort_by(|&a, &b| caps[a].total_cmp(&caps[b]).then(a.cmp(&b)));
    let mut remaining = capacity;
    for (rank, &i) in order.iter().enumerate() {
        let left = (caps.len() - rank) as f64;
        let share = remaining / left;
        let take = share.min(caps[i]).max(0.0);
        rates[i] = take;
        remaining -= take;
    }
    rates
}

/// Equal-share dispatch for one step. Returns a full-length rate vector
/// (zero for inactive vehicles).
pub fn equal_share(
    specs: &[SessionSpec],
    states: &[BatteryState],
    active: &ActiveSet,
    capacity_t: f64,
    model: RateLimitModel,
) -> Vec<f64> {
    let mut rates = vec![0.0; specs.len()];
    if active.members.is_empty() {
        return rates;
    }
    let caps: Vec<f64> = active
        .members
        .iter()
        .map(|&i| rate_cap(&specs[i], &states[i], model))
        .collect();
    let filled = water_fill(&caps, capacity_t);
    for (k, &i) in active.members.iter().enumerate() {
        rates[i] = filled[k];
    }
    rates
}

/// Earliest-deadline-first dispatch for one step: serve in order of
/// departure time (ties by arrival time, then id), each vehicle up to its
/// rate cap, until the station budget is exhausted.
pub fn earliest_deadline(
    specs: &[SessionSpec],
    states: &[BatteryState],
    active: &ActiveSet,
    capacity_t: f64,
    model: RateLimitModel,
) -> Vec<f64> {
    let mut rates = vec![0.0; specs.len()];
    let mut order: Vec<usize> = active.members.clone();
    order.sort_by_key(|&i| (specs[i].t_depart, specs[i].t_arrival, specs[i].id));
    let mut remaining = capacity_t.max(0.0);
    for &i in &order {
        if remaining <= 0.0 {
            break;
        }
        let take = rate_cap(&specs[i], &states[i], model).max(0.0).min(remaining);
        rates[i] = take;
        remaining -= take;
    }
    rates
}

/// A solved receding-horizon plan covering steps `t0..t_end`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatePlan {
    pub t0: usize,
    pub t_end: usize,
    /// Vehicle indices (into the scenario's session list) the plan covers.
    pub members: Vec<usize>,
    /// `rates[k][s]` is the planned rate of `members[k]` at step `t0 + s`;
    /// steps outside that vehicle's window are zero.
    pub rates: Vec<Vec<f64>>,
    pub status: SolveStatus,
    pub objective_value: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl RatePlan {
    pub fn covers(&self, t: usize) -> bool {
        t >= self.t0 && t < self.t_end
    }

    /// The planned rates at absolute step `t` as a full-length vector over
    /// `n_vehicles` scenario sessions.
    pub fn rates_at(&self, t: usize, n_vehicles: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_vehicles];
        if !self.covers(t) {
            return out;
        }
        let s = t - self.t0;
        for (k, &i) in self.members.iter().enumerate() {
            out[i] = self.rates[k][s];
        }
        out
    }
}

/// Which rate-limit rows the receding-horizon program uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlanVariant {
    FixedBounds,
    SocRollout,
}

fn solve_plan(
    specs: &[SessionSpec],
    states: &[BatteryState],
    config: &StationConfig,
    active: &ActiveSet,
    options: &SolverOptions,
    variant: PlanVariant,
) -> Result<RatePlan> {
    let program = match variant {
        PlanVariant::FixedBounds => build_mpc_program(specs, states, config, active)?,
        PlanVariant::SocRollout => build_soc_mpc_program(specs, states, config, active)?,
    };
    let solution = solve(&program, options);
    let t0 = program.t0;
    let t_end = program.t_end;
    let mut rates = vec![vec![0.0; t_end - t0]; active.members.len()];
    for (var, meta) in program.vars.iter().enumerate() {
        let k = active
            .members
            .iter()
            .position(|&i| i == meta.session)
            .expect("program variable refers to an active member");
        rates[k][meta.step - t0] = solution.u[var];
    }
    Ok(RatePlan {
        t0,
        t_end,
        members: active.members.clone(),
        rates,
        status: solution.status,
        objective_value: solution.objective_value,
        kkt_residual: solution.kkt_residual,
        iterations: solution.iterations,
    })
}

/// Plans with fixed nameplate rate limits.
pub fn mpc_plan(
    specs: &[SessionSpec],
    states: &[BatteryState],
    config: &StationConfig,
    active: &ActiveSet,
    options: &SolverOptions,
) -> Result<RatePlan> {
    solve_plan(specs, states, config, active, options, PlanVariant::FixedBounds)
}

/// Plans with rate limits that tighten as the planned charge accumulates.
pub fn soc_mpc_plan(
    specs: &[SessionSpec],
    states: &[BatteryState],
    config: &StationConfig,
    active: &ActiveSet,
    options: &SolverOptions,
) -> Result<RatePlan> {
    solve_plan(specs, states, config, active, options, PlanVariant::SocRollout)
}
