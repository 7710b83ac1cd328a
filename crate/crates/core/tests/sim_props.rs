//! Simulator-level properties across all four policies: pinned
//! single-vehicle outcomes, cross-policy agreement on uncontested
//! instances, conservation, constraint cleanliness, and clipping behavior
//! of the two planners on congested scenarios.

use evsched_core::data::{generate, ArrivalIntensity, GeneratorParams};
use evsched_core::model::{SessionSpec, StationConfig};
use evsched_core::policies::{PolicyKind, RateLimitModel};
use evsched_core::sim::run;
use evsched_core::solver::SolverOptions;

fn congested_params(seed: u64, alpha: f64) -> GeneratorParams {
    GeneratorParams {
        alpha,
        congestion_ratio: 0.5,
        seed,
        ..GeneratorParams::default()
    }
}

#[test]
fn exact_need_in_one_step_window_is_met_by_every_policy() {
    // One vehicle, a one-step window, and a target that needs the full
    // nameplate rate: every policy delivers exactly 5.0 kWh and the target
    // is met at step boundary 1.
    let spec = SessionSpec {
        id: 0,
        x_initial: 0.0,
        x_final: 5.0,
        t_arrival: 0,
        t_depart: 1,
        u_star: 5.0,
        alpha: 0.0,
    };
    let config = StationConfig::constant(10.0, 1.0, 2).unwrap();
    let opts = SolverOptions {
        kkt_tol: 1e-9,
        ..SolverOptions::default()
    };
    for policy in PolicyKind::ALL {
        let r = run(&[spec.clone()], &config, policy, RateLimitModel::Nominal, &opts).unwrap();
        assert!(
            (r.aggregate.delivered_kwh - 5.0).abs() < 1e-6,
            "{policy}: delivered {}",
            r.aggregate.delivered_kwh
        );
        assert!(r.outcomes[0].target_met, "{policy}");
        assert_eq!(r.outcomes[0].completion_step, Some(1), "{policy}");
    }
}

#[test]
fn uncontested_vehicle_gets_the_same_energy_from_every_policy() {
    // A single vehicle with no competition whose need equals its full-rate
    // window: heuristics charge flat-out, planners are pinned by the same
    // bound, so totals agree tightly.
    let spec = SessionSpec {
        id: 0,
        x_initial: 0.0,
        x_final: 6.6,
        t_arrival: 0,
        t_depart: 4,
        u_star: 6.6,
        alpha: 0.0,
    };
    let config = StationConfig::constant(40.0, 0.25, 4).unwrap();
    let mut totals = Vec::new();
    for policy in PolicyKind::ALL {
        let r = run(
            &[spec.clone()],
            &config,
            policy,
            RateLimitModel::Nominal,
            &SolverOptions::default(),
        )
        .unwrap();
        totals.push(r.aggregate.delivered_kwh);
    }
    for &t in &totals {
        assert!((t - 6.6).abs() < 1e-4, "totals {totals:?}");
    }
}

#[test]
fn energy_is_conserved_per_vehicle_on_generated_scenarios() {
    for seed in 0..3u64 {
        let scenario = generate(&congested_params(seed, 0.1)).unwrap();
        let config = scenario.station_config().unwrap();
        for policy in PolicyKind::ALL {
            let r = run(
                &scenario.sessions,
                &config,
                policy,
                RateLimitModel::Nominal,
                &SolverOptions::default(),
            )
            .unwrap();
            for (i, o) in r.outcomes.iter().enumerate() {
                let applied_sum: f64 =
                    r.schedule.applied[i].iter().sum::<f64>() * config.delta;
                let resid = (o.x_end - o.x_initial - applied_sum).abs();
                assert!(
                    resid <= 1e-9 * o.x_end.abs().max(1.0),
                    "{policy} seed {seed} vehicle {}: residual {resid}",
                    o.id
                );
            }
        }
    }
}

#[test]
fn no_policy_ever_violates_constraints_on_generated_scenarios() {
    for seed in 0..3u64 {
        for alpha in [0.0, 0.1] {
            let scenario = generate(&congested_params(seed, alpha)).unwrap();
            let config = scenario.station_config().unwrap();
            for policy in PolicyKind::ALL {
                let r = run(
                    &scenario.sessions,
                    &config,
                    policy,
                    RateLimitModel::Nominal,
                    &SolverOptions::default(),
                )
                .unwrap();
                assert_eq!(
                    r.aggregate.violation_count, 0,
                    "{policy} seed {seed} alpha {alpha}"
                );
            }
        }
    }
}

#[test]
fn rolled_bound_planner_commands_are_never_clipped() {
    // The state-aware planner's rate rows equal the true peak rate along
    // its own trajectory, so the hardware clip never bites (beyond interior
    // dust far below any physical scale).
    for seed in 0..3u64 {
        let scenario = generate(&congested_params(seed, 0.1)).unwrap();
        let config = scenario.station_config().unwrap();
        let r = run(
            &scenario.sessions,
            &config,
            PolicyKind::SocMpc,
            RateLimitModel::Nominal,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(
            r.aggregate.clipped_kwh <= 1e-6 * r.aggregate.commanded_kwh.max(1e-9),
            "seed {seed}: clipped {} of {}",
            r.aggregate.clipped_kwh,
            r.aggregate.commanded_kwh
        );
    }
}

#[test]
fn fixed_bound_planner_loses_energy_to_clipping_when_decay_matters() {
    // Planning against nameplate limits overcommits once batteries fill;
    // the clip shaves real energy on congested scenarios with decay.
    let mut seeds_with_clipping = 0;
    for seed in 0..3u64 {
        let scenario = generate(&congested_params(seed, 0.1)).unwrap();
        let config = scenario.station_config().unwrap();
        let r = run(
            &scenario.sessions,
            &config,
            PolicyKind::Mpc,
            RateLimitModel::Nominal,
            &SolverOptions::default(),
        )
        .unwrap();
        if r.aggregate.clipped_kwh > 1e-3 {
            seeds_with_clipping += 1;
        }
    }
    assert!(
        seeds_with_clipping >= 2,
        "clipping visible on only {seeds_with_clipping}/3 seeds"
    );
}

#[test]
fn more_capacity_never_hurts_state_aware_planner_delivery() {
    // Same arrivals, growing station budget: total delivered energy under
    // the state-aware planner is nondecreasing on these fixed seeds. (The
    // step-by-step heuristics can jitter by up to one step's overshoot when
    // a vehicle crosses its target faster, so the claim is specific to the
    // planner that aims at the target.)
    for seed in [3u64, 11, 27] {
        let mut last = -1.0f64;
        for ratio in [0.3, 0.5, 0.8, 1.2] {
            let params = GeneratorParams {
                congestion_ratio: ratio,
                ..congested_params(seed, 0.1)
            };
            let scenario = generate(&params).unwrap();
            let config = scenario.station_config().unwrap();
            let r = run(
                &scenario.sessions,
                &config,
                PolicyKind::SocMpc,
                RateLimitModel::Nominal,
                &SolverOptions::default(),
            )
            .unwrap();
            // Tolerance at solver-gap scale: successive solves land at
            // slightly different interior points, so totals wiggle by
            // ~1e-5 kWh even when nothing physical changed.
            assert!(
                r.aggregate.delivered_kwh >= last - 1e-3,
                "seed {seed}: {} kWh at ratio {ratio} after {last}",
                r.aggregate.delivered_kwh
            );
            last = r.aggregate.delivered_kwh;
        }
    }
}

#[test]
fn true_soc_limit_model_avoids_clipping_for_heuristics() {
    // With battery telemetry the heuristics never command above the peak
    // rate; without it they clip on decaying batteries.
    let scenario = generate(&congested_params(5, 0.1)).unwrap();
    let config = scenario.station_config().unwrap();
    for policy in [PolicyKind::EqualShare, PolicyKind::EarliestDeadline] {
        let informed = run(
            &scenario.sessions,
            &config,
            policy,
            RateLimitModel::TrueSoc,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(
            informed.aggregate.clipped_kwh
                <= 1e-9 * informed.aggregate.commanded_kwh.max(1e-9),
            "{policy}: clipped {}",
            informed.aggregate.clipped_kwh
        );
    }
}

#[test]
fn per_step_trace_accounts_for_command_and_clip() {
    let scenario = generate(&congested_params(2, 0.05)).unwrap();
    let config = scenario.station_config().unwrap();
    let r = run(
        &scenario.sessions,
        &config,
        PolicyKind::Mpc,
        RateLimitModel::Nominal,
        &SolverOptions::default(),
    )
    .unwrap();
    assert_eq!(r.per_step.len(), config.horizon);
    for (t, row) in r.per_step.iter().enumerate() {
        assert_eq!(row.t, t);
        let commanded: f64 = (0..r.outcomes.len())
            .map(|i| r.schedule.commanded[i][t])
            .sum();
        let applied: f64 = (0..r.outcomes.len())
            .map(|i| r.schedule.applied[i][t])
            .sum();
        assert!((row.commanded_kw - commanded).abs() < 1e-12);
        assert!((row.applied_kw - applied).abs() < 1e-12);
        assert!(row.applied_kw <= row.commanded_kw + 1e-12);
    }
}
