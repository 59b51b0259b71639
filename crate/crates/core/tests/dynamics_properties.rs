use proptest::prelude::*;

use pinning_core::discrete::{construct_supersolution, path_stats, SearchBudget};
use pinning_core::dynamics::{
    check_comparison, simulate, Boundary, ComparisonObserver, EventLog, InterfaceState, RateRule, SignAudit, SimParams,
};
use pinning_core::{DistributionSpec, Exec, SeededField};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Below a constructed barrier with fixed ghosts, the interface never crosses it.
    #[test]
    fn barrier_is_never_crossed(p in 0.45f64..0.9, seed in any::<u64>(), sim_seed in any::<u64>(), table in any::<bool>()) {
        let field = SeededField::new(seed, DistributionSpec::bernoulli_pm1(p).unwrap());
        let w = 32i64;
        let path = (0..)
            .map(|n0| construct_supersolution(&field, n0, 0, w, SearchBudget::default(), Exec::Sequential).unwrap())
            .find(|p| path_stats(p).nonnegative && p.v_bar(-w - 1) >= 0)
            .unwrap();
        let rule = if table {
            RateRule::table([(-2, -4.0), (-1, -1.0), (0, 0.0), (1, 0.25), (2, 5.0)]).unwrap()
        } else {
            RateRule::DefaultBounded
        };
        let mut params = SimParams::new(0, 200.0, sim_seed);
        params.rule = rule.clone();
        let state = InterfaceState::flat(64, 0, Boundary::Fixed { left: 0, right: 0 }, -32);
        let mut obs = ComparisonObserver::new(&path);
        let mut log = EventLog::default();
        let mut audit = SignAudit::new(&field, 0, rule, Some(&path));
        simulate(&field, state, &params, &mut [&mut obs, &mut log, &mut audit]).unwrap();
        prop_assert!(obs.report().ok);
        prop_assert_eq!(check_comparison(&log, &path), obs.report());
        prop_assert_eq!(audit.sign_violations, 0);
        prop_assert_eq!(audit.touching_up_jumps, 0);
    }

    #[test]
    fn heights_move_by_one(seed in any::<u64>()) {
        let field = SeededField::new(seed, DistributionSpec::bernoulli_pm1(0.3).unwrap());
        let mut log = EventLog::default();
        let t = simulate(&field, InterfaceState::flat(20, 0, Boundary::Periodic, 0), &SimParams::new(0, 20.0, seed), &mut [&mut log]).unwrap();
        prop_assert!(log.events.iter().all(|e| (e.to - e.from).abs() == 1));
        prop_assert!(log.events.windows(2).all(|w| w[0].time <= w[1].time));
        prop_assert_eq!(t.jump_count as usize, log.events.len());
        let mut u = log.initial.clone();
        for e in &log.events {
            prop_assert_eq!(u[e.site], e.from);
            u[e.site] = e.to;
        }
        prop_assert_eq!(u, t.final_u);
    }
}

#[test]
fn larger_force_climbs_higher() {
    let field = SeededField::new(5, DistributionSpec::bernoulli_pm1(0.6).unwrap());
    let mean_top = |force: i64| {
        (0..8u64)
            .map(|s| {
                let st = InterfaceState::flat(64, 0, Boundary::Periodic, 0);
                simulate(&field, st, &SimParams::new(force, 100.0, s), &mut []).unwrap().max_height as f64
            })
            .sum::<f64>()
            / 8.0
    };
    let tops: Vec<f64> = (-1..=1).map(mean_top).collect();
    assert!(tops.windows(2).all(|w| w[1] >= w[0]), "{tops:?}");
}
