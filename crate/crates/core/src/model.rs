//! Charging-station domain model: sessions, station limits, battery state
//! evolution, the SOC-dependent peak-rate law, and schedule validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A session counts as fulfilled once its battery is within this many kWh of
/// the requested departure energy.
pub const EPS_DONE_KWH: f64 = 1e-6;

/// Slack allowed when checking capacity and per-vehicle rate constraints (kW).
pub const FEAS_TOL_KW: f64 = 1e-9;

/// One EV charging request: arrival/departure window, energy need, and the
/// affine peak-rate parameters of its battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub id: u64,
    /// Battery energy on arrival (kWh).
    pub x_initial: f64,
    /// Requested battery energy at departure (kWh).
    pub x_final: f64,
    /// First timestep the session is live (inclusive).
    pub t_arrival: usize,
    /// First timestep the session is gone (exclusive).
    pub t_depart: usize,
    /// Nominal peak charging rate (kW).
    pub u_star: f64,
    /// Peak-rate decay per unit of stored energy (kW per kWh).
    pub alpha: f64,
}

impl SessionSpec {
    /// Checks the session invariants against a horizon of `horizon` steps.
    pub fn validate(&self, horizon: usize) -> Result<()> {
        let fail = |reason: String| Error::InvalidSession {
            id: self.id,
            reason,
        };
        for (name, v) in [
            ("x_initial", self.x_initial),
            ("x_final", self.x_final),
            ("u_star", self.u_star),
            ("alpha", self.alpha),
        ] {
            if !v.is_finite() {
                return Err(fail(format!("{name} is not finite")));
            }
        }
        if self.t_arrival >= self.t_depart {
            return Err(fail(format!(
                "arrival {} must precede departure {}",
                self.t_arrival, self.t_depart
            )));
        }
        if self.t_depart > horizon {
            return Err(fail(format!(
                "departure {} exceeds horizon {horizon}",
                self.t_depart
            )));
        }
        if self.x_initial < 0.0 || self.x_initial > self.x_final {
            return Err(fail(format!(
                "need 0 <= x_initial <= x_final, got {} and {}",
                self.x_initial, self.x_final
            )));
        }
        if self.u_star <= 0.0 {
            return Err(fail(format!("u_star must be positive, got {}", self.u_star)));
        }
        if self.alpha < 0.0 {
            return Err(fail(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if self.u_star - self.alpha * self.x_final <= 0.0 {
            return Err(fail(format!(
                "target {} kWh is unreachable: peak rate decays to {} kW before it",
                self.x_final,
                self.u_star - self.alpha * self.x_final
            )));
        }
        Ok(())
    }

    /// True when the session occupies timestep `t` (half-open window).
    pub fn is_live(&self, t: usize) -> bool {
        self.t_arrival <= t && t < self.t_depart
    }
}

/// Station-level parameters: the shared capacity profile and the step grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationConfig {
    /// Total power available per timestep (kW), length `horizon`.
    pub capacity: Vec<f64>,
    /// Energy delivered per kW of rate over one step (hours per step).
    pub delta: f64,
    /// Number of timesteps.
    pub horizon: usize,
}

impl StationConfig {
    pub fn new(capacity: Vec<f64>, delta: f64) -> Result<Self> {
        let horizon = capacity.len();
        let cfg = StationConfig {
            capacity,
            delta,
            horizon,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn constant(capacity_kw: f64, delta: f64, horizon: usize) -> Result<Self> {
        Self::new(vec![capacity_kw; horizon], delta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.capacity.len() != self.horizon {
            return Err(Error::InvalidConfig(format!(
                "capacity has {} entries for horizon {}",
                self.capacity.len(),
                self.horizon
            )));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "delta must be a positive number of hours, got {}",
                self.delta
            )));
        }
        if let Some(p) = self
            .capacity
            .iter()
            .find(|p| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidConfig(format!(
                "capacity entries must be nonnegative, got {p}"
            )));
        }
        Ok(())
    }
}

/// Energy state of one vehicle at the start of timestep `t` (i.e. after the
/// charge applied during step `t - 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    pub vehicle: u64,
    pub t: usize,
    /// Stored energy (kWh).
    pub x: f64,
}

/// Commanded and physically applied charging rates for all sessions over the
/// horizon. Row order follows the session list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleMatrix {
    pub commanded: Vec<Vec<f64>>,
    pub applied: Vec<Vec<f64>>,
}

impl ScheduleMatrix {
    pub fn zeros(vehicles: usize, horizon: usize) -> Self {
        ScheduleMatrix {
            commanded: vec![vec![0.0; horizon]; vehicles],
            applied: vec![vec![0.0; horizon]; vehicles],
        }
    }

    pub fn vehicles(&self) -> usize {
        self.applied.len()
    }

    pub fn horizon(&self) -> usize {
        self.applied.first().map_or(0, Vec::len)
    }
}

/// Sessions eligible for dispatch at timestep `t`: inside their window and
/// still short of the departure target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSet {
    pub t: usize,
    /// Indices into the session slice, ascending.
    pub members: Vec<usize>,
}

impl ActiveSet {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }
}

/// Peak charging rate a battery accepts at stored energy `x`, clamped at zero.
pub fn peak_rate(spec: &SessionSpec, x: f64) -> f64 {
    (spec.u_star - spec.alpha * x).max(0.0)
}

/// Battery energy after one step of charging at rate `u`.
pub fn evolve_state(x: f64, u: f64, delta: f64) -> f64 {
    x + delta * u
}

/// Sessions live at `t` whose departure target is still unmet. `states` is
/// index-aligned with `specs`.
pub fn active_sessions(specs: &[SessionSpec], states: &[BatteryState], t: usize) -> ActiveSet {
    debug_assert_eq!(specs.len(), states.len());
    let members = specs
        .iter()
        .enumerate()
        .filter(|(i, spec)| spec.is_live(t) && states[*i].x < spec.x_final - EPS_DONE_KWH)
        .map(|(i, _)| i)
        .collect();
    ActiveSet { t, members }
}

/// Reduces commanded rates at timestep `t` to what each battery physically
/// accepts: zero outside the session window, and at most the peak rate at the
/// vehicle's current stored energy.
pub fn clip_to_limits(
    commanded: &[f64],
    states: &[BatteryState],
    specs: &[SessionSpec],
    t: usize,
) -> Vec<f64> {
    debug_assert_eq!(commanded.len(), specs.len());
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            if !spec.is_live(t) {
                0.0
            } else {
                commanded[i].min(peak_rate(spec, states[i].x)).max(0.0)
            }
        })
        .collect()
}

/// The constraint a schedule entry violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// Charging outside the session window.
    Window,
    /// Station capacity exceeded.
    Capacity,
    /// Per-vehicle peak rate exceeded.
    Rate,
    /// Negative charging rate.
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: ConstraintKind,
    /// Session id, absent for station-level capacity violations.
    pub vehicle: Option<u64>,
    pub t: usize,
    pub magnitude: f64,
}

/// Checks the applied schedule against the session windows, the station
/// capacity profile, and the SOC-dependent peak-rate limits. Battery
/// trajectories are reconstructed from the applied rates themselves.
pub fn validate_schedule(
    sched: &ScheduleMatrix,
    specs: &[SessionSpec],
    config: &StationConfig,
) -> Result<Vec<Violation>> {
    let n = specs.len();
    let horizon = config.horizon;
    if sched.applied.len() != n || sched.commanded.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "schedule has {} rows for {} sessions",
            sched.applied.len(),
            n
        )));
    }
    for row in sched.applied.iter().chain(sched.commanded.iter()) {
        if row.len() != horizon {
            return Err(Error::DimensionMismatch(format!(
                "schedule row has {} steps for horizon {horizon}",
                row.len()
            )));
        }
    }

    let mut violations = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let mut x = spec.x_initial;
        for t in 0..horizon {
            let u = sched.applied[i][t];
            if u < -FEAS_TOL_KW {
                violations.push(Violation {
                    constraint: ConstraintKind::Negative,
                    vehicle: Some(spec.id),
                    t,
                    magnitude: -u,
                });
                continue;
            }
            if !spec.is_live(t) {
                if u > FEAS_TOL_KW {
                    violations.push(Violation {
                        constraint: ConstraintKind::Window,
                        vehicle: Some(spec.id),
                        t,
                        magnitude: u,
                    });
                }
                continue;
            }
            let limit = peak_rate(spec, x);
            if u > limit + FEAS_TOL_KW {
                violations.push(Violation {
                    constraint: ConstraintKind::Rate,
                    vehicle: Some(spec.id),
                    t,
                    magnitude: u - limit,
                });
            }
            x = evolve_state(x, u, config.delta);
        }
    }
    for t in 0..horizon {
        let total: f64 = (0..n).map(|i| sched.applied[i][t]).sum();
        if total > config.capacity[t] + FEAS_TOL_KW {
            violations.push(Violation {
                constraint: ConstraintKind::Capacity,
                vehicle: None,
                t,
                magnitude: total - config.capacity[t],
            });
        }
    }
    Ok(violations)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(id: u64, window: (usize, usize), x0: f64, xf: f64, u_star: f64, alpha: f64) -> SessionSpec {
        SessionSpec {
            id,
            x_initial: x0,
            x_final: xf,
            t_arrival: window.0,
            t_depart: window.1,
            u_star,
            alpha,
        }
    }

    fn states_for(specs: &[SessionSpec], xs: &[f64], t: usize) -> Vec<BatteryState> {
        specs
            .iter()
            .zip(xs)
            .map(|(s, &x)| BatteryState {
                vehicle: s.id,
                t,
                x,
            })
            .collect()
    }

    #[test]
    fn peak_rate_direct() {
        let s = spec(0, (0, 10), 0.0, 20.0, 6.6, 0.1);
        assert_eq!(peak_rate(&s, 10.0), 5.6);
    }

    #[test]
    fn peak_rate_constant_when_alpha_zero() {
        let s = spec(0, (0, 10), 0.0, 60.0, 6.6, 0.0);
        assert_eq!(peak_rate(&s, 50.0), 6.6);
    }

    #[test]
    fn peak_rate_clamps_at_zero() {
        let s = spec(0, (0, 10), 0.0, 5.0, 3.0, 0.5);
        assert_eq!(peak_rate(&s, 8.0), 0.0);
    }

    #[test]
    fn evolve_state_direct() {
        assert_eq!(evolve_state(5.0, 4.0, 0.25), 6.0);
        assert_eq!(evolve_state(5.0, 0.0, 0.25), 5.0);
        assert_eq!(evolve_state(0.0, 6.6, 1.0), 6.6);
    }

    #[test]
    fn active_window_is_half_open() {
        let specs = vec![spec(0, (8, 12), 0.0, 10.0, 6.6, 0.0)];
        let states = states_for(&specs, &[0.0], 12);
        assert!(active_sessions(&specs, &states, 12).is_empty());
        let states = states_for(&specs, &[0.0], 8);
        assert_eq!(active_sessions(&specs, &states, 8).members, vec![0]);
    }

    #[test]
    fn active_excludes_met_target() {
        let specs = vec![spec(0, (8, 12), 0.0, 10.0, 6.6, 0.0)];
        let states = states_for(&specs, &[10.0], 10);
        assert!(active_sessions(&specs, &states, 10).is_empty());
    }

    #[test]
    fn clip_takes_min_with_peak_rate() {
        let specs = vec![spec(0, (0, 4), 0.0, 20.0, 6.6, 0.1)];
        let states = states_for(&specs, &[10.0], 1);
        assert_eq!(clip_to_limits(&[6.6], &states, &specs, 1), vec![5.6]);
        assert_eq!(clip_to_limits(&[3.0], &states, &specs, 1), vec![3.0]);
        assert_eq!(clip_to_limits(&[0.0], &states, &specs, 1), vec![0.0]);
    }

    #[test]
    fn clip_is_idempotent() {
        let specs = vec![
            spec(0, (0, 4), 0.0, 20.0, 6.6, 0.1),
            spec(1, (0, 4), 0.0, 30.0, 7.2, 0.05),
        ];
        let states = states_for(&specs, &[12.0, 3.0], 2);
        let once = clip_to_limits(&[6.6, 9.0], &states, &specs, 2);
        let twice = clip_to_limits(&once, &states, &specs, 2);
        assert_eq!(once, twice);
    }

    #[test]
    fn validate_accepts_all_zeros() {
        let specs = vec![spec(0, (0, 4), 0.0, 10.0, 6.6, 0.1)];
        let config = StationConfig::constant(10.0, 0.25, 4).unwrap();
        let sched = ScheduleMatrix::zeros(1, 4);
        assert!(validate_schedule(&sched, &specs, &config).unwrap().is_empty());
    }

    #[test]
    fn validate_reports_capacity_overdraw() {
        let specs = vec![
            spec(0, (0, 2), 0.0, 10.0, 6.6, 0.0),
            spec(1, (0, 2), 0.0, 10.0, 6.6, 0.0),
        ];
        let config = StationConfig::constant(7.0, 1.0, 2).unwrap();
        let mut sched = ScheduleMatrix::zeros(2, 2);
        sched.applied[0][0] = 4.0;
        sched.applied[1][0] = 4.0;
        let violations = validate_schedule(&sched, &specs, &config).unwrap();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].constraint, ConstraintKind::Capacity);
        assert!((violations[0].magnitude - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validate_reports_window_violation() {
        let specs = vec![spec(0, (2, 4), 0.0, 10.0, 6.6, 0.0)];
        let config = StationConfig::constant(10.0, 1.0, 4).unwrap();
        let mut sched = ScheduleMatrix::zeros(1, 4);
        sched.applied[0][0] = 1.0;
        let violations = validate_schedule(&sched, &specs, &config).unwrap();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].constraint, ConstraintKind::Window);
        assert_eq!(violations[0].vehicle, Some(0));
        assert_eq!(violations[0].t, 0);
    }

    #[test]
    fn validate_tracks_soc_along_applied_path() {
        // Charging at 6.6 kW from empty: after 10 kWh stored the limit is 5.6.
        let specs = vec![spec(0, (0, 3), 0.0, 20.0, 6.6, 0.1)];
        let config = StationConfig::constant(10.0, 1.0, 3).unwrap();
        let mut sched = ScheduleMatrix::zeros(1, 3);
        sched.applied[0][0] = 6.6; // x becomes 6.6
        sched.applied[0][1] = 6.6; // limit is 6.6 - 0.66 = 5.94 -> violation
        let violations = validate_schedule(&sched, &specs, &config).unwrap();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].constraint, ConstraintKind::Rate);
        assert_eq!(violations[0].t, 1);
        assert!((violations[0].magnitude - 0.66).abs() < 1e-9);
    }

    #[test]
    fn validate_rejects_dimension_mismatch() {
        let specs = vec![spec(0, (0, 2), 0.0, 10.0, 6.6, 0.0)];
        let config = StationConfig::constant(10.0, 1.0, 2).unwrap();
        let sched = ScheduleMatrix::zeros(2, 2);
        assert!(matches!(
            validate_schedule(&sched, &specs, &config),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn session_invariants_enforced() {
        let mut s = spec(3, (5, 5), 0.0, 10.0, 6.6, 0.0);
        assert!(s.validate(10).is_err()); // empty window
        s.t_depart = 11;
        assert!(s.validate(10).is_err()); // beyond horizon
        s.t_depart = 8;
        s.u_star = 2.0;
        s.alpha = 0.3;
        assert!(s.validate(10).is_err()); // target unreachable: 2.0 - 3.0 <= 0
        s.alpha = 0.1;
        assert!(s.validate(10).is_ok());
    }
}
