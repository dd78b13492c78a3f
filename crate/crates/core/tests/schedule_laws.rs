use etap_core::schedule::{simulate, ScheduleConfig};
use proptest::prelude::*;

#[test]
fn makespan_formulas_for_every_block_count() {
    for t_c in 1..=64u64 {
        for (t_load, t_compute) in [(1, 1), (2, 5), (3, 3), (1, 9)] {
            let serial = simulate(&ScheduleConfig::new(t_c, 1, t_load, t_compute)).unwrap();
            assert_eq!(serial.makespan, t_c * (t_load + t_compute));

            let cfg = ScheduleConfig::new(t_c, 2, t_load, t_compute);
            let hidden = simulate(&cfg).unwrap();
            assert_eq!(hidden.makespan, t_load + t_c * t_compute);
            assert_eq!(hidden.stall_time, 0);
            hidden.check(&cfg).unwrap();
        }
        for t_compute in 1..5 {
            let cfg = ScheduleConfig::new(t_c, 2, 2 * t_compute, t_compute);
            let bound = simulate(&cfg).unwrap();
            assert_eq!(bound.makespan, t_c * 2 * t_compute + t_compute);
            bound.check(&cfg).unwrap();
        }
    }
}

fn arb_config() -> impl Strategy<Value = ScheduleConfig> {
    (
        1u64..40,
        1u64..6,
        1u64..20,
        1u64..20,
        0u64..4,
        any::<bool>(),
    )
        .prop_map(
            |(t_c, stages, t_load, t_compute, t_barrier, split)| ScheduleConfig {
                t_c,
                stages,
                t_load,
                t_compute,
                t_barrier,
                split,
            },
        )
}

proptest! {
    #[test]
    fn every_trace_replays_legally(cfg in arb_config()) {
        let trace = simulate(&cfg).unwrap();
        prop_assert_eq!(trace.check(&cfg), Ok(()));
    }

    #[test]
    fn lower_bounds_hold(cfg in arb_config()) {
        let trace = simulate(&cfg).unwrap();
        let busy = cfg.consumer_compute();
        prop_assert!(trace.makespan >= cfg.t_c * busy);
        prop_assert!(trace.makespan >= cfg.t_c * cfg.t_load);
        prop_assert!(trace.makespan >= cfg.t_load + busy);
        if !cfg.split {
            prop_assert!(trace.makespan >= cfg.t_c * cfg.t_compute);
            prop_assert!(trace.makespan >= cfg.t_load + cfg.t_compute);
            prop_assert_eq!(trace.stall_time, trace.makespan - cfg.t_load - cfg.t_c * cfg.t_compute);
        }
    }

    #[test]
    fn more_stages_never_hurt(mut cfg in arb_config()) {
        cfg.split = false;
        let mut last = u64::MAX;
        for stages in 1..6 {
            cfg.stages = stages;
            let m = simulate(&cfg).unwrap().makespan;
            prop_assert!(m <= last);
            last = m;
        }
    }

    #[test]
    fn double_buffering_saturates_without_barrier(mut cfg in arb_config()) {
        cfg.split = false;
        cfg.t_barrier = 0;
        cfg.stages = 2;
        let two = simulate(&cfg).unwrap().makespan;
        for stages in 3..6 {
            cfg.stages = stages;
            prop_assert_eq!(simulate(&cfg).unwrap().makespan, two);
        }
    }

    #[test]
    fn deterministic(cfg in arb_config()) {
        prop_assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    }
}
