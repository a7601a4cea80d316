use eami::decision::{DecisionBackendSet, HoursPolicy, OrderPolicy, ScriptedBackend, ScriptedPolicy};
use eami::metrics::{effective_hours, hours_vs_orders, involution_index, spearman};
use eami::sim::{run_simulation, SimConfig, SimOptions};
use eami::trace::{audit_trace, read_trace, Trace, TraceEvent, TraceHeader, TraceWriter};
use proptest::prelude::*;

fn run(config: &SimConfig, backends: &DecisionBackendSet) -> Trace {
    let mut events: Vec<TraceEvent> = Vec::new();
    run_simulation(config.clone(), SimOptions::default(), backends, &mut events).unwrap();
    Trace {
        header: TraceHeader::for_config(config, 0),
        events,
    }
}

fn imitation(seed: u64) -> DecisionBackendSet {
    DecisionBackendSet::new(ScriptedBackend::new(ScriptedPolicy::default(), seed))
}

fn small(seed: u64) -> SimConfig {
    SimConfig {
        n_riders: 20,
        total_steps: 600,
        seed,
        ..SimConfig::default()
    }
}

#[test]
fn involution_index_is_linear_in_wage() {
    let base = small(5);
    let scaled = SimConfig {
        wage_rate: 2.5,
        ..base.clone()
    };
    let a = involution_index(&run(&base, &imitation(5))).unwrap();
    let b = involution_index(&run(&scaled, &imitation(5))).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.orders, y.orders, "behavior must not depend on the wage");
        assert!((y.cost - 2.5 * x.cost).abs() <= 1e-9 * y.cost.max(1.0));
        assert!((y.index - 2.5 * x.index).abs() <= 1e-9 * y.index.max(1.0));
    }
}

#[test]
fn longer_hours_bring_more_orders() {
    let config = SimConfig {
        n_riders: 20,
        total_steps: 1200,
        base_order_rate: 1.0,
        seed: 11,
        ..SimConfig::default()
    };
    let mut backends = imitation(11);
    for r in 0..20u32 {
        let len = 1 + r as u8;
        backends = backends.with_override(r, ScriptedBackend::fixed(2, 2 + len, OrderPolicy::GreedyNearest, 11));
    }
    let rows = hours_vs_orders(&run(&config, &backends)).unwrap();
    let hours: Vec<f64> = rows.iter().map(|r| r.total_hours).collect();
    let orders: Vec<f64> = rows.iter().map(|r| r.total_orders as f64).collect();
    let rho = spearman(&hours, &orders).unwrap();
    assert!(rho > 0.8, "spearman {rho}");
}

#[test]
fn effective_hours_never_exceed_total() {
    let config = small(8);
    let trace = run(&config, &imitation(8));
    for day in 0..config.days() {
        for row in effective_hours(&trace, day).unwrap() {
            assert!(row.effective_hours <= row.total_hours + 1e-12, "day {day}: {row:?}");
            assert!(row.total_hours <= 24.0 + 1e-12);
        }
    }
}

#[test]
fn zero_demand_flags_every_day_and_keeps_length() {
    let config = SimConfig {
        base_order_rate: 0.0,
        ..small(1)
    };
    let rows = involution_index(&run(&config, &imitation(1))).unwrap();
    assert_eq!(rows.len() as u64, config.days());
    assert!(rows.iter().all(|r| r.flagged && r.orders == 0 && r.index == r.cost));
}

#[test]
fn replay_from_the_trace_reproduces_it_byte_for_byte() {
    let config = small(21);
    let first = run(&config, &imitation(21)).to_bytes().unwrap();
    let loaded = read_trace(&first[..]).unwrap();
    let again = run(&loaded.replay_config().unwrap(), &imitation(loaded.header.seed));
    assert_eq!(again.to_bytes().unwrap(), first);
}

#[test]
fn streaming_writer_matches_buffered_trace() {
    let config = small(4);
    let buffered = run(&config, &imitation(4)).to_bytes().unwrap();
    let mut w = TraceWriter::new(Vec::new(), &TraceHeader::for_config(&config, 0)).unwrap();
    run_simulation(config.clone(), SimOptions::default(), &imitation(4), &mut w).unwrap();
    assert!(w.is_finished());
    assert_eq!(w.into_inner().unwrap(), buffered);
}

fn policy() -> impl Strategy<Value = ScriptedPolicy> {
    (
        prop_oneof![
            (0u8..3).prop_map(|delta| HoursPolicy::ImitateTopRanked { delta }),
            Just(HoursPolicy::FixedHours { hours: None }),
        ],
        prop_oneof![Just(OrderPolicy::GreedyNearest), Just(OrderPolicy::RouteOptimizer)],
    )
        .prop_map(|(hours, orders)| ScriptedPolicy { hours, orders })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn audit_holds_for_random_worlds(
        seed in any::<u64>(),
        riders in 0u32..12,
        days in 1u64..4,
        cap in 1u32..6,
        rate in 0.0f64..6.0,
        grid in 5u32..250,
        speed in 1u32..40,
        p in policy(),
    ) {
        let config = SimConfig {
            seed,
            n_riders: riders,
            total_steps: days * 120,
            order_cap: cap,
            base_order_rate: rate,
            grid_size: grid,
            max_move_per_step: speed,
            ..SimConfig::default()
        };
        let trace = run(&config, &DecisionBackendSet::new(ScriptedBackend::new(p, seed)));
        let report = audit_trace(&trace);
        prop_assert!(report.is_clean(), "{:?}", report.violations);
        let rows = involution_index(&trace).unwrap();
        prop_assert_eq!(rows.len() as u64, days);
        prop_assert!(rows.iter().all(|r| r.index >= 0.0));
    }
}
