use hammersim_core::attack::{
    gen_benign, gen_idle, gen_round_robin, parse_trace, run_feinting, write_trace, Discipline, FeintingSpec,
    RoundRobinSpec,
};
use hammersim_core::dram::DeviceGeometry;
use hammersim_core::engine::{audit, Engine, EngineSetup, EventKind, TraceEvent};
use hammersim_core::schemes::{Scheme, SchemeConfig};
use hammersim_core::{Error, Ps};
use proptest::prelude::*;

#[test]
fn idle_trace() {
    assert!(gen_idle(Ps::ZERO).is_empty());
    assert_eq!(gen_idle(Ps::ms(32)), vec![TraceEvent::idle(0, Ps::ms(32))]);
}

#[test]
fn round_robin_rows_and_validation() {
    let g = DeviceGeometry::default();
    let spec = RoundRobinSpec { n: 4, stride: 5, base_row: 100 };
    assert_eq!(spec.rows(), vec![100, 105, 110, 115]);
    let first: Vec<u32> = gen_round_robin(&spec, &g)
        .unwrap()
        .take(6)
        .map(|e| match e.kind {
            EventKind::Act(r) => r,
            k => panic!("{k:?}"),
        })
        .collect();
    assert_eq!(first, vec![100, 105, 110, 115, 100, 105]);
    let bad = [
        RoundRobinSpec { n: 0, stride: 1, base_row: 0 },
        RoundRobinSpec { n: 2, stride: 0, base_row: 0 },
        RoundRobinSpec { n: 2, stride: 1, base_row: 65535 },
        RoundRobinSpec { n: 70000, stride: 1, base_row: 0 },
    ];
    for s in bad {
        assert!(matches!(s.validate(&g), Err(Error::Config(_))), "{s:?}");
    }
    RoundRobinSpec { n: 1, stride: 1, base_row: 65535 }.validate(&g).unwrap();
}

#[test]
fn benign_stream_is_seeded() {
    let g = DeviceGeometry::default();
    let a = gen_benign(7, &g, Ps::ns(100), 500);
    assert_eq!(a, gen_benign(7, &g, Ps::ns(100), 500));
    assert_ne!(a, gen_benign(8, &g, Ps::ns(100), 500));
    let times: Vec<Ps> = a.iter().map(|e| e.time.unwrap()).collect();
    assert!(times.windows(2).all(|w| w[0] <= w[1]));
    // Mean gap within 15% of the request over 500 samples.
    let mean = times.last().unwrap().as_ns() / 500.0;
    assert!((mean - 100.0).abs() < 15.0, "{mean}");
}

#[test]
fn trace_parse_examples_and_errors() {
    let text = "# comment\n\n12.5,0,ACT,7\nASAP,1,IDLE,100\n asap , 0 , ACT , 3 \n";
    let t = parse_trace(text.as_bytes()).unwrap();
    assert_eq!(
        t,
        vec![
            TraceEvent::act_at(Ps(12_500), 0, 7),
            TraceEvent::idle(1, Ps::ns(100)),
            TraceEvent::act(0, 3),
        ]
    );
    for bad in ["1,0,ACT", "x,0,ACT,1", "1,-1,ACT,1", "1,0,PRE,1", "1,0,ACT,row", "1,0,IDLE,?"] {
        let err = parse_trace(bad.as_bytes()).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("line 1")), "{bad}: {err}");
    }
}

fn event() -> impl Strategy<Value = TraceEvent> {
    (prop::option::of(0u64..10_000_000_000), 0u32..16, any::<bool>(), 0u32..65536, 0u64..1_000_000_000).prop_map(
        |(t, bank, act, row, d)| TraceEvent { time: t.map(Ps), bank, kind: if act { EventKind::Act(row) } else { EventKind::Idle(Ps(d)) } },
    )
}

proptest! {
    #[test]
    fn trace_round_trip(trace in prop::collection::vec(event(), 0..50)) {
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        prop_assert_eq!(parse_trace(buf.as_slice()).unwrap(), trace);
    }
}

#[test]
fn r1_ranges_at_defaults() {
    let g = DeviceGeometry::default();
    assert_eq!(FeintingSpec::r1_range(Discipline::VictimBased, &g), (4, 52428));
    assert_eq!(FeintingSpec::max_placeable(Discipline::VictimBased, &g), 512 / 5 * 128 * 4);
    assert_eq!(FeintingSpec::r1_range(Discipline::AggressorBased, &g), (1, 65535));
    assert_eq!(FeintingSpec::max_placeable(Discipline::AggressorBased, &g), 65535);
}

fn spec(discipline: Discipline, r1: u32, n_bo: u32) -> FeintingSpec {
    FeintingSpec { discipline, r1, n_bo, n_mit: 4, abo_act: 3, abo_delay: 1 }
}

#[test]
fn victim_layout_uses_stride_blocks() {
    let g = DeviceGeometry::small(512);
    let l = spec(Discipline::VictimBased, 10, 8).layout(&g).unwrap();
    assert_eq!(l.aggressors, vec![2, 7, 12]);
    assert_eq!(l.pool, vec![0, 1, 3, 4, 5, 6, 8, 9, 10, 11]);
    assert_eq!(l.target, None);
    // Blocks never straddle a DSA: 102 blocks fit in 512 rows, the 103rd starts the next DSA.
    let g2 = DeviceGeometry { rows_per_dsa: 512, ..DeviceGeometry::small(1024) };
    let l = spec(Discipline::VictimBased, 103 * 4, 8).layout(&g2).unwrap();
    assert_eq!(l.aggressors[101], 507);
    assert_eq!(l.aggressors[102], 514);
    assert!(spec(Discipline::VictimBased, 3, 8).layout(&g).is_err());
    assert!(spec(Discipline::VictimBased, 409, 8).layout(&g).is_err());
}

#[test]
fn aggressor_layout_excludes_target() {
    let g = DeviceGeometry::small(512);
    let l = spec(Discipline::AggressorBased, 6, 8).layout(&g).unwrap();
    assert_eq!(l.target, Some(3));
    assert_eq!(l.pool, vec![0, 1, 2, 4, 5, 6]);
    assert_eq!(l.aggressors, l.pool);
    assert!(spec(Discipline::AggressorBased, 512, 8).layout(&g).is_err());
    assert!(spec(Discipline::AggressorBased, 6, 0).layout(&g).is_err());
}

fn feint(scheme: Scheme, s: FeintingSpec) -> (EngineSetup, Engine, hammersim_core::attack::FeintingOutcome) {
    let setup = EngineSetup::new(SchemeConfig::preset(scheme, s.n_bo, s.n_mit), Ps::ms(32))
        .with_geometry(DeviceGeometry::small(512))
        .tracking(true);
    let mut e = Engine::new(setup.clone()).unwrap();
    let out = run_feinting(&mut e, &s).unwrap();
    (setup, e, out)
}

#[test]
fn feinting_against_pvac() {
    let s = spec(Discipline::VictimBased, 40, 8);
    let (setup, e, out) = feint(Scheme::Pvac, s);
    assert!(!out.truncated);
    assert_eq!(out.prepared, 10);
    assert_eq!(out.setup_acts, 10 * 7);
    assert!(out.survivors.len() <= 1);
    assert!(out.rounds > 0);
    let run = e.finish().unwrap();
    assert!(audit(&run.log, &setup).ok());
    assert!(run.metrics.alerts_raised > 0);
}

#[test]
fn feinting_against_prac_leaves_two_per_side() {
    let s = spec(Discipline::AggressorBased, 40, 8);
    let (_, _, out) = feint(Scheme::Prac, s);
    assert!(!out.truncated);
    assert_eq!(out.prepared, 40);
    assert_eq!(out.setup_acts, 40 * 7);
    assert!(out.survivors.len() <= 4, "{:?}", out.survivors);
}

#[test]
fn feinting_truncates_at_the_span() {
    let s = spec(Discipline::AggressorBased, 400, 64);
    let setup = EngineSetup::new(SchemeConfig::preset(Scheme::Prac, 64, 4), Ps::us(100))
        .with_geometry(DeviceGeometry::small(512));
    let mut e = Engine::new(setup).unwrap();
    let out = run_feinting(&mut e, &s).unwrap();
    assert!(out.truncated);
    assert!(out.setup_acts < 400 * 63);
}
