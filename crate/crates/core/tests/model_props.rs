//! Property tests for the physical model: the peak-rate law, hardware
//! clipping, state evolution, and schedule validation.

use evsched_core::model::{
    clip_to_limits, evolve_state, peak_rate, validate_schedule, BatteryState, ScheduleMatrix,
    SessionSpec, StationConfig,
};
use proptest::prelude::*;

fn arb_session() -> impl Strategy<Value = SessionSpec> {
    (
        0.0f64..30.0,       // x_initial
        0.1f64..25.0,       // energy
        0usize..6,          // t_arrival
        1usize..8,          // stay
        3.0f64..8.0,        // u_star
        0.0f64..0.05,       // alpha
    )
        .prop_map(|(x0, energy, arr, stay, u_star, alpha)| SessionSpec {
            id: 0,
            x_initial: x0,
            x_final: x0 + energy,
            t_arrival: arr,
            t_depart: arr + stay,
            u_star,
            alpha,
        })
        .prop_filter("target must keep a positive peak rate", |s| {
            s.u_star - s.alpha * s.x_final > 0.0
        })
}

proptest! {
    #[test]
    fn peak_rate_decreases_with_charge_and_never_goes_negative(
        s in arb_session(),
        x1 in 0.0f64..100.0,
        dx in 0.0f64..100.0,
    ) {
        let r1 = peak_rate(&s, x1);
        let r2 = peak_rate(&s, x1 + dx);
        prop_assert!(r1 >= 0.0);
        prop_assert!(r2 <= r1 + 1e-12);
        // Past the cutoff charge the battery accepts nothing.
        let cutoff = if s.alpha > 0.0 { s.u_star / s.alpha } else { f64::INFINITY };
        if x1 >= cutoff {
            prop_assert_eq!(r1, 0.0);
        }
    }

    #[test]
    fn evolution_telescopes_to_the_rate_sum(
        x0 in 0.0f64..30.0,
        rates in proptest::collection::vec(0.0f64..8.0, 1..12),
        delta in 0.1f64..1.0,
    ) {
        let mut x = x0;
        for &u in &rates {
            x = evolve_state(x, u, delta);
        }
        let direct = x0 + delta * rates.iter().sum::<f64>();
        prop_assert!((x - direct).abs() <= 1e-9 * direct.abs().max(1.0));
    }

    #[test]
    fn clipping_is_idempotent_and_bounded(
        s in arb_session(),
        commanded in 0.0f64..20.0,
        x in 0.0f64..40.0,
        t in 0usize..14,
    ) {
        let specs = vec![s.clone()];
        let states = vec![BatteryState { vehicle: 0, t, x }];
        let once = clip_to_limits(&[commanded], &states, &specs, t);
        let twice = clip_to_limits(&once, &states, &specs, t);
        prop_assert_eq!(once[0].to_bits(), twice[0].to_bits());
        prop_assert!(once[0] >= 0.0);
        prop_assert!(once[0] <= commanded);
        if s.is_live(t) {
            prop_assert!(once[0] <= peak_rate(&s, x));
        } else {
            prop_assert_eq!(once[0], 0.0);
        }
    }

    #[test]
    fn clipped_schedules_validate_clean(
        seed_rates in proptest::collection::vec(0.0f64..10.0, 24),
        capacity in 2.0f64..20.0,
    ) {
        // Three vehicles, eight steps. Scale each step's commands into the
        // station budget, clip against the simulated battery path, and the
        // result must pass validation with nothing to report.
        let horizon = 8;
        let specs: Vec<SessionSpec> = (0..3)
            .map(|i| SessionSpec {
                id: i as u64,
                x_initial: 2.0 * i as f64,
                x_final: 2.0 * i as f64 + 20.0,
                t_arrival: i,
                t_depart: horizon - i,
                u_star: 6.6,
                alpha: 0.05,
            })
            .collect();
        let config = StationConfig::constant(capacity, 0.5, horizon).unwrap();
        let mut states: Vec<BatteryState> = specs
            .iter()
            .map(|s| BatteryState { vehicle: s.id, t: 0, x: s.x_initial })
            .collect();
        let mut sched = ScheduleMatrix::zeros(3, horizon);
        for t in 0..horizon {
            let mut commanded: Vec<f64> = (0..3)
                .map(|i| seed_rates[t * 3 + i])
                .collect();
            let total: f64 = commanded.iter().sum();
            if total > capacity {
                for c in &mut commanded {
                    *c *= capacity / total * (1.0 - 1e-12);
                }
            }
            let applied = clip_to_limits(&commanded, &states, &specs, t);
            for i in 0..3 {
                sched.commanded[i][t] = commanded[i];
                sched.applied[i][t] = applied[i];
                states[i].x = evolve_state(states[i].x, applied[i], config.delta);
            }
        }
        let violations = validate_schedule(&sched, &specs, &config).unwrap();
        prop_assert!(violations.is_empty(), "violations: {violations:?}");
    }
}
