//! Event-driven simulation of a dispatch policy over one scenario.
//!
//! The loop walks the horizon step by step. At each step boundary it collects
//! events (departures, targets met, arrivals — in that order), and for the
//! planning policies re-solves the horizon program only when an event
//! occurred; between events the stored plan is executed directly. Every
//! commanded rate passes through the hardware clip before it is applied, and
//! battery states evolve on the applied rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    active_sessions, clip_to_limits, evolve_state, validate_schedule, BatteryState,
    ScheduleMatrix, SessionSpec, StationConfig, EPS_DONE_KWH,
};
use crate::policies::{
    earliest_deadline, equal_share, mpc_plan, soc_mpc_plan, PolicyKind, RatePlan, RateLimitModel,
};
use crate::solver::SolverOptions;

/// What happened at a step boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimEventKind {
    Arrival,
    Departure,
    /// A vehicle crossed its energy target and leaves the active set.
    TargetMet,
    HorizonEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimEvent {
    pub t: usize,
    pub kind: SimEventKind,
    /// The vehicle's session id; `None` for horizon-wide events.
    pub vehicle: Option<u64>,
}

/// One row of the per-step trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerStepRow {
    pub t: usize,
    pub capacity_kw: f64,
    pub commanded_kw: f64,
    pub applied_kw: f64,
    pub active_count: usize,
}

/// Per-vehicle outcome of a simulated scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VehicleOutcome {
    pub id: u64,
    pub t_arrival: usize,
    pub t_depart: usize,
    pub x_initial: f64,
    pub x_target: f64,
    pub x_end: f64,
    pub delivered_kwh: f64,
    /// First step boundary at which the target was met, if ever.
    pub completion_step: Option<usize>,
    pub target_met: bool,
}

/// Scenario-level aggregates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub vehicles: usize,
    pub delivered_kwh: f64,
    /// Total energy requested across sessions (`x_final - x_initial`).
    pub requested_kwh: f64,
    pub commanded_kwh: f64,
    /// Energy lost to the hardware clip (commanded minus applied).
    pub clipped_kwh: f64,
    pub targets_met: usize,
    /// Fraction of vehicles that met their target; 1.0 for an empty scenario.
    pub feasible_rate: f64,
    pub violation_count: usize,
    /// Mean of per-vehicle final charge relative to target (`x_end /
    /// x_target`, counting 1.0 when the target is zero); 1.0 when empty.
    pub mean_final_soc: f64,
    /// How many times a horizon program was solved.
    pub resolve_count: usize,
}

/// Everything produced by simulating one policy on one scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub policy: PolicyKind,
    pub limit_model: RateLimitModel,
    pub schedule: ScheduleMatrix,
    pub per_step: Vec<PerStepRow>,
    pub events: Vec<SimEvent>,
    pub outcomes: Vec<VehicleOutcome>,
    pub aggregate: Aggregate,
}

fn target_met(spec: &SessionSpec, x: f64) -> bool {
    x >= spec.x_final - EPS_DONE_KWH
}

/// Runs `policy` over the scenario and returns the full trace.
///
/// Sessions must validate against the station horizon. Vehicles whose target
/// is already met on arrival never enter the active set; vehicles that
/// depart short leave anyway and their shortfall shows up in the outcomes.
pub fn run(
    specs: &[SessionSpec],
    config: &StationConfig,
    policy: PolicyKind,
    limit_model: RateLimitModel,
    options: &SolverOptions,
) -> Result<ScenarioResult> {
    config.validate()?;
    if !options.is_valid() {
        return Err(Error::InvalidConfig(
            "solver options out of range".to_string(),
        ));
    }
    for s in specs {
        s.validate(config.horizon)?;
    }

    let n = specs.len();
    let horizon = config.horizon;
    let mut states: Vec<BatteryState> = specs
        .iter()
        .map(|s| BatteryState {
            vehicle: s.id,
            t: s.t_arrival,
            x: s.x_initial,
        })
        .collect();
    // Vehicles in the station at the current step (arrived, not departed),
    // regardless of whether their target is met.
    let mut plugged = vec![false; n];
    let mut met = vec![false; n];
    let mut completion: Vec<Option<usize>> = vec![None; n];
    // Targets crossed while charging, to be announced at the next boundary.
    let mut pending_met: Vec<usize> = Vec::new();

    let mut schedule = ScheduleMatrix::zeros(n, horizon);
    let mut per_step = Vec::with_capacity(horizon);
    let mut events = Vec::new();
    let mut plan: Option<RatePlan> = None;
    let mut resolve_count = 0usize;

    for t in 0..horizon {
        let mut step_events: Vec<SimEvent> = Vec::new();
        for (i, s) in specs.iter().enumerate() {
            if plugged[i] && s.t_depart == t {
                plugged[i] = false;
                step_events.push(SimEvent {
                    t,
                    kind: SimEventKind::Departure,
                    vehicle: Some(s.id),
                });
            }
        }
        for &i in &pending_met {
            // A vehicle can cross its target on the same boundary it departs;
            // the departure above already removed it, but the target event is
            // still worth announcing.
            step_events.push(SimEvent {
                t,
                kind: SimEventKind::TargetMet,
                vehicle: Some(specs[i].id),
            });
        }
        pending_met.clear();
        for (i, s) in specs.iter().enumerate() {
            if s.t_arrival == t {
                plugged[i] = true;
                if target_met(s, states[i].x) {
                    // Arrived already full: never active, counts as met.
                    met[i] = true;
                    completion[i] = Some(t);
                } else {
                    step_events.push(SimEvent {
                        t,
                        kind: SimEventKind::Arrival,
                        vehicle: Some(s.id),
                    });
                }
            }
        }

        let active = active_sessions(specs, &states, t);

        // Decide commanded rates.
        let commanded: Vec<f64> = match policy {
            PolicyKind::EqualShare => equal_share(
                specs,
                &states,
                &active,
                config.capacity[t],
                limit_model,
            ),
            PolicyKind::EarliestDeadline => earliest_deadline(
                specs,
                &states,
                &active,
                config.capacity[t],
                limit_model,
            ),
            PolicyKind::Mpc | PolicyKind::SocMpc => {
                if !step_events.is_empty() || plan.as_ref().map_or(true, |p| !p.covers(t)) {
                    plan = if active.members.is_empty() {
                        None
                    } else {
                        resolve_count += 1;
                        let solved = if policy == PolicyKind::Mpc {
                            mpc_plan(specs, &states, config, &active, options)?
                        } else {
                            soc_mpc_plan(specs, &states, config, &active, options)?
                        };
                        Some(solved)
                    };
                }
                match &plan {
                    Some(p) => p.rates_at(t, n),
                    None => vec![0.0; n],
                }
            }
        };

        events.append(&mut step_events);

        // Hardware clip, then apply.
        let applied = clip_to_limits(&commanded, &states, specs, t);
        let mut applied_sum = 0.0;
        let mut commanded_sum = 0.0;
        for i in 0..n {
            schedule.commanded[i][t] = commanded[i];
            schedule.applied[i][t] = applied[i];
            commanded_sum += commanded[i];
            applied_sum += applied[i];
        }
        per_step.push(PerStepRow {
            t,
            capacity_kw: config.capacity[t],
            commanded_kw: commanded_sum,
            applied_kw: applied_sum,
            active_count: active.members.len(),
        });

        // Evolve batteries on applied rates.
        for &i in &active.members {
            states[i].x = evolve_state(states[i].x, applied[i], config.delta);
            states[i].t = t + 1;
            if !met[i] && target_met(&specs[i], states[i].x) {
                met[i] = true;
                completion[i] = Some(t + 1);
                pending_met.push(i);
            }
        }
    }

    // Flush boundary events at the end of the horizon.
    let t_final = horizon;
    for (i, s) in specs.iter().enumerate() {
        if plugged[i] && s.t_depart == t_final {
            plugged[i] = false;
            events.push(SimEvent {
                t: t_final,
                kind: SimEventKind::Departure,
                vehicle: Some(s.id),
            });
        }
    }
    for &i in &pending_met {
        events.push(SimEvent {
            t: t_final,
            kind: SimEventKind::TargetMet,
            vehicle: Some(specs[i].id),
        });
    }
    events.push(SimEvent {
        t: t_final,
        kind: SimEventKind::HorizonEnd,
        vehicle: None,
    });

    let outcomes: Vec<VehicleOutcome> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let delivered = states[i].x - s.x_initial;
            VehicleOutcome {
                id: s.id,
                t_arrival: s.t_arrival,
                t_depart: s.t_depart,
                x_initial: s.x_initial,
                x_target: s.x_final,
                x_end: states[i].x,
                delivered_kwh: delivered,
                completion_step: completion[i],
                target_met: met[i],
            }
        })
        .collect();

    let violations = validate_schedule(&schedule, specs, config)?;
    let delivered_kwh: f64 = outcomes.iter().map(|o| o.delivered_kwh).sum();
    let requested_kwh: f64 = specs.iter().map(|s| s.x_final - s.x_initial).sum();
    let commanded_kwh: f64 = schedule
        .commanded
        .iter()
        .flatten()
        .map(|r| r * config.delta)
        .sum();
    let applied_kwh: f64 = schedule
        .applied
        .iter()
        .flatten()
        .map(|r| r * config.delta)
        .sum();
    let clipped_kwh = (commanded_kwh - applied_kwh).max(0.0);
    let targets_met = outcomes.iter().filter(|o| o.target_met).count();
    let feasible_rate = if n == 0 {
        1.0
    } else {
        targets_met as f64 / n as f64
    };
    let mean_final_soc = if n == 0 {
        1.0
    } else {
        outcomes
            .iter()
            .map(|o| {
                if o.x_target > 0.0 {
                    o.x_end / o.x_target
                } else {
                    1.0
                }
            })
            .sum::<f64>()
            / n as f64
    };

    Ok(ScenarioResult {
        policy,
        limit_model,
        schedule,
        per_step,
        events,
        outcomes,
        aggregate: Aggregate {
            vehicles: n,
            delivered_kwh,
            requested_kwh,
            commanded_kwh,
            clipped_kwh,
            targets_met,
            feasible_rate,
            violation_count: violations.len(),
            mean_final_soc,
            resolve_count,
        },
    })
}

/// Runs several policies on the same scenario in parallel and returns the
/// results in the order the policies were given.
pub fn compare(
    specs: &[SessionSpec],
    config: &StationConfig,
    policies: &[(PolicyKind, RateLimitModel)],
    options: &SolverOptions,
) -> Vec<Result<ScenarioResult>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = policies
            .iter()
            .map(|&(policy, model)| {
                scope.spawn(move || run(specs, config, policy, model, options))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("policy thread panicked")).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn station(capacity: f64, delta: f64, horizon: usize) -> StationConfig {
        StationConfig::constant(capacity, delta, horizon).unwrap()
    }

    fn simple_spec(id: u64, window: (usize, usize), energy: f64) -> SessionSpec {
        SessionSpec {
            id,
            x_initial: 0.0,
            x_final: energy,
            t_arrival: window.0,
            t_depart: window.1,
            u_star: 6.6,
            alpha: 0.0,
        }
    }

    #[test]
    fn empty_scenario_is_trivially_feasible() {
        let config = station(10.0, 0.25, 8);
        let r = run(
            &[],
            &config,
            PolicyKind::EqualShare,
            RateLimitModel::Nominal,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(r.aggregate.vehicles, 0);
        assert_eq!(r.aggregate.feasible_rate, 1.0);
        assert_eq!(r.aggregate.mean_final_soc, 1.0);
        assert_eq!(r.aggregate.delivered_kwh, 0.0);
        assert_eq!(r.events.len(), 1);
        assert_eq!(r.events[0].kind, SimEventKind::HorizonEnd);
    }

    #[test]
    fn single_vehicle_charges_to_target_and_stops() {
        // 6.6 kW over one hour-long step delivers exactly the 6.6 kWh
        // target, so the vehicle finishes at boundary 1 and idles after.
        let spec = simple_spec(0, (0, 2), 6.6);
        let config = station(20.0, 1.0, 2);
        let r = run(
            &[spec],
            &config,
            PolicyKind::EqualShare,
            RateLimitModel::Nominal,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(r.outcomes[0].completion_step, Some(1));
        assert!(r.outcomes[0].target_met);
        // No charging after the target is met.
        assert_eq!(r.schedule.applied[0][1], 0.0);
        assert!((r.aggregate.delivered_kwh - 6.6).abs() < 1e-12);
        assert!(r
            .events
            .iter()
            .any(|e| e.kind == SimEventKind::TargetMet && e.t == 1));
        assert_eq!(r.aggregate.feasible_rate, 1.0);
    }

    #[test]
    fn planner_delivers_exact_need_in_tight_window() {
        // Window is one step, target needs the full rate: commanded clips to
        // exactly the limit and the vehicle finishes as it departs.
        let spec = SessionSpec {
            id: 7,
            x_initial: 0.0,
            x_final: 5.0,
            t_arrival: 0,
            t_depart: 1,
            u_star: 5.0,
            alpha: 0.0,
        };
        let config = station(10.0, 1.0, 2);
        let opts = SolverOptions {
            kkt_tol: 1e-9,
            ..SolverOptions::default()
        };
        for policy in [PolicyKind::Mpc, PolicyKind::SocMpc] {
            let r = run(&[spec.clone()], &config, policy, RateLimitModel::Nominal, &opts).unwrap();
            assert!(
                (r.aggregate.delivered_kwh - 5.0).abs() < 1e-6,
                "{policy}: delivered {}",
                r.aggregate.delivered_kwh
            );
            assert_eq!(r.outcomes[0].completion_step, Some(1), "{policy}");
            assert!(r.outcomes[0].target_met, "{policy}");
        }
    }

    #[test]
    fn departure_with_unmet_target_records_shortfall() {
        // Needs 10 kWh but the window only allows 6.6.
        let spec = simple_spec(0, (0, 1), 10.0);
        let config = station(20.0, 1.0, 3);
        let r = run(
            &[spec],
            &config,
            PolicyKind::EarliestDeadline,
            RateLimitModel::Nominal,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(!r.outcomes[0].target_met);
        assert_eq!(r.outcomes[0].completion_step, None);
        assert!((r.outcomes[0].x_end - 6.6).abs() < 1e-12);
        assert_eq!(r.aggregate.feasible_rate, 0.0);
        assert!(r
            .events
            .iter()
            .any(|e| e.kind == SimEventKind::Departure && e.t == 1));
        // Departed at t=1: no charging afterwards.
        assert_eq!(r.schedule.applied[0][1], 0.0);
        assert_eq!(r.schedule.applied[0][2], 0.0);
    }

    #[test]
    fn arrival_already_full_never_charges() {
        let spec = SessionSpec {
            x_initial: 5.0,
            x_final: 5.0,
            ..simple_spec(3, (1, 4), 5.0)
        };
        let config = station(10.0, 1.0, 4);
        let r = run(
            &[spec],
            &config,
            PolicyKind::Mpc,
            RateLimitModel::Nominal,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(r.outcomes[0].target_met);
        assert_eq!(r.outcomes[0].completion_step, Some(1));
        assert_eq!(r.aggregate.delivered_kwh, 0.0);
        assert_eq!(r.aggregate.resolve_count, 0);
        // No arrival event is announced for a vehicle with nothing to do.
        assert!(!r.events.iter().any(|e| e.kind == SimEventKind::Arrival));
    }

    #[test]
    fn planner_resolves_only_on_events() {
        // Two vehicles: one present from 0, another arrives at 2 and departs
        // at 4. Events at t=0 (arrival), t=2 (arrival), t=4 (departure, no
        // re-solve needed for it alone unless someone is still active).
        let a = simple_spec(0, (0, 6), 40.0); // stays the whole horizon
        let b = simple_spec(1, (2, 4), 40.0);
        let config = station(5.0, 1.0, 6);
        let r = run(
            &[a, b],
            &config,
            PolicyKind::Mpc,
            RateLimitModel::Nominal,
            &SolverOptions::default(),
        )
        .unwrap();
        // Re-solves at t=0, t=2, and t=4 (departure of b): three total.
        assert_eq!(r.aggregate.resolve_count, 3);
        assert_eq!(r.aggregate.violation_count, 0);
    }

    #[test]
    fn capacity_is_never_exceeded_by_any_policy() {
        let specs = vec![
            simple_spec(0, (0, 8), 30.0),
            simple_spec(1, (1, 6), 25.0),
            simple_spec(2, (3, 8), 20.0),
        ];
        let config = station(8.0, 0.5, 8);
        for policy in PolicyKind::ALL {
            let r = run(
                &specs,
                &config,
                policy,
                RateLimitModel::Nominal,
                &SolverOptions::default(),
            )
            .unwrap();
            assert_eq!(r.aggregate.violation_count, 0, "{policy}");
            for row in &r.per_step {
                assert!(row.applied_kw <= row.capacity_kw + 1e-9, "{policy}");
            }
        }
    }

    #[test]
    fn conservation_energy_matches_soc_change() {
        let specs = vec![
            simple_spec(0, (0, 6), 12.0),
            simple_spec(1, (2, 8), 9.0),
        ];
        let config = station(6.0, 0.25, 8);
        for policy in PolicyKind::ALL {
            let r = run(
                &specs,
                &config,
                policy,
                RateLimitModel::Nominal,
                &SolverOptions::default(),
            )
            .unwrap();
            let applied_energy: f64 = r
                .schedule
                .applied
                .iter()
                .flatten()
                .map(|u| u * config.delta)
                .sum();
            let soc_change: f64 = r.outcomes.iter().map(|o| o.x_end - o.x_initial).sum();
            let scale = applied_energy.abs().max(1.0);
            assert!(
                (applied_energy - soc_change).abs() <= 1e-9 * scale,
                "{policy}: {applied_energy} vs {soc_change}"
            );
        }
    }

    #[test]
    fn compare_returns_results_in_input_order() {
        let specs = vec![simple_spec(0, (0, 4), 8.0)];
        let config = station(10.0, 0.5, 4);
        let order = [
            (PolicyKind::SocMpc, RateLimitModel::Nominal),
            (PolicyKind::EqualShare, RateLimitModel::Nominal),
        ];
        let results = compare(&specs, &config, &order, &SolverOptions::default());
        assert_eq!(results.len(), 2);
        assert_eq!(results[0].as_ref().unwrap().policy, PolicyKind::SocMpc);
        assert_eq!(results[1].as_ref().unwrap().policy, PolicyKind::EqualShare);
    }
}
