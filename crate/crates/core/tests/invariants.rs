use lbc_core::engine::{single_flow_delays, Fabric, FabricConfig, TraceStage};
use lbc_core::traffic::TrafficGenerator;
use lbc_core::{run, Error, Pattern, PortAddress, Scenario, Spread, SwitchGeometry, TrafficSpec};
use proptest::prelude::*;

fn pattern_strategy() -> impl Strategy<Value = Pattern> {
    prop_oneof![
        Just(Pattern::BernoulliUniform),
        (2.0f64..20.0).prop_map(|l| Pattern::Bursty { burst_mean: l }),
        (0.0f64..=1.0).prop_map(|w| Pattern::Unbalanced { omega: w }),
        Just(Pattern::Hotspot { port: 0 }),
        Just(Pattern::StressA {
            spread: Spread::Uniform
        }),
        Just(Pattern::StressA {
            spread: Spread::RoundRobin
        }),
        Just(Pattern::StressB),
    ]
}

fn fabric_and_traffic(
    k: usize,
    pattern: Pattern,
    load: f64,
    seed: u64,
) -> (Fabric, TrafficGenerator) {
    let geo = SwitchGeometry::symmetric(k).unwrap();
    let mut cfg = FabricConfig::new(geo);
    cfg.abort_on_reorder = false;
    let gen = TrafficSpec::new(pattern, load, seed)
        .generator(&geo)
        .unwrap();
    (Fabric::new(cfg).unwrap(), gen)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Buffers never exceed capacity: an overflow would surface as an error.
    #[test]
    fn flow_control_keeps_buffers_within_capacity(
        k in 2usize..5,
        pattern in pattern_strategy(),
        load in 0.5f64..1.0,
        seed in any::<u64>(),
    ) {
        let geo = SwitchGeometry::symmetric(k).unwrap();
        let mut s = Scenario::new("p", geo, TrafficSpec::new(pattern, load, seed)).with_slots(0, 4000);
        s.abort_on_reorder = false;
        let r = run(&s);
        prop_assert!(!matches!(r, Err(Error::Overflow { .. })), "{:?}", r);
        let r = r.unwrap();
        prop_assert!(r.max_vomq <= s.capacities.vomq);
        prop_assert!(r.max_cb <= s.capacities.cb);
    }

    #[test]
    fn cells_are_conserved_and_outputs_work_conserving(
        k in 2usize..5,
        pattern in pattern_strategy(),
        load in 0.1f64..1.0,
        seed in any::<u64>(),
    ) {
        let (mut fabric, mut gen) = fabric_and_traffic(k, pattern, load, seed);
        let n = fabric.geometry().ports();
        let mut arrivals = Vec::new();
        let (mut injected, mut departed) = (0u64, 0u64);
        for _ in 0..3000 {
            let backlog: Vec<bool> = (0..n)
                .map(|v| (0..k).any(|r| fabric.cb_len(v, r) > 0))
                .collect();
            gen.arrivals(&mut arrivals);
            let c = fabric.step(&arrivals).unwrap();
            injected += u64::from(c.arrivals);
            departed += u64::from(c.departures);
            prop_assert!(c.voq_to_vomq as usize <= n);
            prop_assert!(c.vomq_to_cb as usize <= n);
            let mut served = vec![false; n];
            for cell in fabric.last_departures() {
                prop_assert!(!served[cell.dst], "two departures from one output");
                served[cell.dst] = true;
            }
            prop_assert_eq!(served, backlog);
        }
        prop_assert_eq!(injected, departed + fabric.in_flight());
    }

    // A lone flow sees the same delay for every cell.
    #[test]
    fn lone_flow_has_constant_delay(
        k in 2usize..6,
        (i, s, j, d) in (0usize..6, 0usize..6, 0usize..6, 0usize..6),
        cells in 1usize..30,
        start in 0u64..12,
    ) {
        let geo = SwitchGeometry::symmetric(k).unwrap();
        let delays = single_flow_delays(
            geo,
            PortAddress::new(i % k, s % k),
            PortAddress::new(j % k, d % k),
            cells,
            start,
        ).unwrap();
        prop_assert_eq!(delays.len(), cells);
        prop_assert!(delays.iter().all(|&x| x == delays[0]), "{:?}", delays);
        prop_assert!(delays[0] >= 3 && delays[0] <= 3 + k as u64);
    }
}

#[test]
fn vomq_arrival_rates_match_stage_two_oracle() {
    use lbc_core::analysis::decompose_r2;
    use lbc_core::schedule::compound_p1;

    let k = 3;
    let slots = 200_000u64;
    for pattern in [
        Pattern::BernoulliUniform,
        Pattern::Unbalanced { omega: 0.5 },
    ] {
        let geo = SwitchGeometry::symmetric(k).unwrap();
        let spec = TrafficSpec::new(pattern, 0.5, 99);
        let mut cfg = FabricConfig::new(geo);
        cfg.abort_on_reorder = false;
        cfg.trace = true;
        let mut fabric = Fabric::new(cfg).unwrap();
        let mut gen = spec.generator(&geo).unwrap();
        let mut arrivals = Vec::new();
        for _ in 0..slots {
            gen.arrivals(&mut arrivals);
            fabric.step(&arrivals).unwrap();
        }
        let n = geo.ports();
        // counts[j][u][link]
        let mut counts = vec![vec![vec![0u64; n]; n]; k];
        for e in fabric.trace() {
            if let TraceStage::VoqToVomq(id) = e.stage {
                counts[id.om][e.src][id.link.cim * k + id.link.port] += 1;
            }
        }
        let r1 = spec.rate_matrix(&geo);
        let p1 = compound_p1(&geo);
        let mut worst = 0.0f64;
        for (j, per_om) in counts.iter().enumerate() {
            let r2j = decompose_r2(&r1, &p1, &geo, j).unwrap();
            for (u, row) in per_om.iter().enumerate() {
                for (c, &x) in row.iter().enumerate() {
                    worst = worst.max((x as f64 / slots as f64 - r2j[(u, c)]).abs());
                }
            }
        }
        assert!(worst < 0.01, "{pattern}: max deviation {worst}");
    }
}
