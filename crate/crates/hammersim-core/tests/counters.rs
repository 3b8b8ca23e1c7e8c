use hammersim_core::counters::{
    counter_update_breakdown, counter_update_latency, csa_activations_for_event, spans_chunk_boundary,
    validate_layout, victim_set, CounterBank, CsaEvent, CsaLayout, CsaTiming, Semantics,
    CSA_SCALING_PER_DOUBLING,
};
use hammersim_core::dram::{DeviceGeometry, TimingLabel, TimingSet};
use hammersim_core::{Error, Ps};
use proptest::prelude::*;

fn bank(g: DeviceGeometry) -> CounterBank {
    CounterBank::new(g, CsaLayout::in_dsa()).unwrap()
}

#[test]
fn victim_set_examples() {
    let g = DeviceGeometry::default();
    assert_eq!(victim_set(128, &g).to_vec(), vec![126, 127, 129, 130]);
    assert_eq!(victim_set(0, &g).to_vec(), vec![1, 2]);
    assert_eq!(victim_set(511, &g).to_vec(), vec![509, 510]);
    assert_eq!(victim_set(512, &g).to_vec(), vec![513, 514]);
    let g1 = DeviceGeometry { blast_radius: 1, ..g };
    assert_eq!(victim_set(40, &g1).to_vec(), vec![39, 41]);
}

#[test]
fn apply_activation_examples() {
    let mut b = bank(DeviceGeometry::default());
    let up = b.apply_activation(10, Semantics::VictimCount).unwrap();
    assert_eq!(up.to_vec(), vec![(10, 0), (8, 1), (9, 1), (11, 1), (12, 1)]);

    let mut b = bank(DeviceGeometry::default());
    b.set(10, 5);
    let up = b.apply_activation(10, Semantics::AggressorCount).unwrap();
    assert_eq!(up.to_vec(), vec![(10, 6)]);
    assert_eq!((b.get(9), b.get(11)), (0, 0));

    // The second ACT resets row 11 even though the first bumped it.
    let mut b = bank(DeviceGeometry::default());
    b.apply_activation(10, Semantics::VictimCount).unwrap();
    b.apply_activation(11, Semantics::VictimCount).unwrap();
    assert_eq!(b.get(11), 0);
    // Row 10 was reset by its own ACT, then bumped once by row 11's.
    assert_eq!(b.get(10), 1);

    let mut b = bank(DeviceGeometry::default());
    assert!(b.apply_activation(10, Semantics::NoCount).unwrap().is_empty());
    assert_eq!(b.max(), 0);
}

#[test]
fn out_of_range_row_is_rejected() {
    let mut b = bank(DeviceGeometry::small(64));
    assert_eq!(b.apply_activation(64, Semantics::AggressorCount), Err(Error::RowOutOfRange { row: 64, rows: 64 }));
}

#[test]
fn counters_saturate() {
    let g = DeviceGeometry { counter_bits: 3, ..DeviceGeometry::small(64) };
    let mut b = bank(g);
    for _ in 0..10 {
        b.apply_activation(5, Semantics::AggressorCount).unwrap();
    }
    assert_eq!(b.get(5), 7);
    assert_eq!(b.saturations(), 3);
}

#[test]
fn update_latency_examples() {
    let t = CsaTiming::default();
    let b = counter_update_breakdown(&t, 2);
    assert_eq!(b.update, Ps::from_ns(4.15));
    // 7.6 + 5 * 0.83 + 19.2 + 4.1
    assert!((counter_update_latency(&t, 2).as_ns() - 35.1).abs() <= 0.05 + 1e-9);
    let no_up = CsaTiming { t_up: Ps::ZERO, ..t };
    assert!((counter_update_latency(&no_up, 2).as_ns() - 30.9).abs() < 1e-9);
    assert!((counter_update_latency(&t, 4).as_ns() - 38.37).abs() < 1e-9);
    assert!((b.csa_share() - 30.9 / 35.05).abs() < 1e-12);
}

#[test]
fn update_latency_stays_below_default_trc() {
    let t_rc = TimingSet::builtin(TimingLabel::Default).t_rc;
    for rows in [65536u32, 131072, 262144] {
        for br in 1..=4 {
            let t = CsaTiming::scaled(rows, CSA_SCALING_PER_DOUBLING);
            // Independent: array terms scale by factor^doublings, tUP does not.
            let k = CSA_SCALING_PER_DOUBLING.powi((rows / 65536).trailing_zeros() as i32);
            let want = 30.9 * k + f64::from(2 * br + 1) * 0.83;
            let got = counter_update_latency(&t, br);
            assert!((got.as_ns() - want).abs() < 0.005, "{rows} BR{br}: {got} vs {want}");
            assert!(got < t_rc);
        }
    }
    assert_eq!(CsaTiming::scaled(65536, 1.5), CsaTiming::default());
}

#[test]
fn csa_activation_examples() {
    let g = DeviceGeometry::default();
    let naive = CsaLayout::naive();
    let dual = CsaLayout::optimized_dual();
    let one_per_dsa: Vec<u32> = (0..8).map(|k| k * 2 * 512).collect();
    assert_eq!(csa_activations_for_event(&naive, &g, &CsaEvent::Refresh(&one_per_dsa)), 8);
    assert_eq!(csa_activations_for_event(&dual, &g, &CsaEvent::Refresh(&one_per_dsa)), 1);
    let same_dsa: Vec<u32> = (0..8).collect();
    assert_eq!(csa_activations_for_event(&naive, &g, &CsaEvent::Refresh(&same_dsa)), 1);
    assert_eq!(csa_activations_for_event(&dual, &g, &CsaEvent::NormalAct(128)), 2);
    assert_eq!(csa_activations_for_event(&dual, &g, &CsaEvent::NormalAct(64)), 1);
    assert_eq!(csa_activations_for_event(&naive, &g, &CsaEvent::NormalAct(128)), 1);
    assert_eq!(csa_activations_for_event(&CsaLayout::in_dsa(), &g, &CsaEvent::NormalAct(128)), 0);
    assert_eq!(csa_activations_for_event(&dual, &g, &CsaEvent::Refresh(&[])), 0);
}

#[test]
fn dual_layout_boundary_rows() {
    let g = DeviceGeometry::default();
    let dual = CsaLayout::optimized_dual();
    let rows: Vec<u32> = (0..512).filter(|&r| spans_chunk_boundary(&dual, &g, r)).collect();
    // Rows whose [r-2, r+2] window crosses one of the 3 internal chunk boundaries.
    let want: Vec<u32> = [128u32, 256, 384].iter().flat_map(|&b| b - 2..b + 2).collect();
    assert_eq!(rows, want);
    assert_eq!(rows.len(), 12);
    assert_eq!(dual.subarray_of(127), 0);
    assert_eq!(dual.subarray_of(128), 1);
    assert_eq!(dual.subarray_of(256), 0);
}

#[test]
fn layout_validation_and_overhead() {
    let g = DeviceGeometry::default();
    validate_layout(&CsaLayout::optimized_dual(), &g).unwrap();
    assert!(validate_layout(&CsaLayout::optimized_dual(), &DeviceGeometry::small(64)).is_err());
    validate_layout(&CsaLayout::in_dsa(), &DeviceGeometry::small(64)).unwrap();
    let o = CsaLayout::naive().capacity_overhead(&g);
    assert!((o - 192.0 / 65536.0).abs() < 1e-12);
}

#[test]
fn csv_export() {
    let mut b = bank(DeviceGeometry::small(4));
    b.apply_activation(1, Semantics::AggressorCount).unwrap();
    let mut out = Vec::new();
    b.write_csv(&mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), "row,count\n0,0\n1,1\n2,0\n3,0\n");
}

fn semantics() -> impl Strategy<Value = Semantics> {
    prop_oneof![Just(Semantics::AggressorCount), Just(Semantics::VictimCount), Just(Semantics::NoCount)]
}

proptest! {
    #[test]
    fn counter_invariants(
        bits in 1u8..6,
        br in 1u32..4,
        ops in prop::collection::vec((0u32..256, semantics()), 1..400),
    ) {
        let g = DeviceGeometry { counter_bits: bits, blast_radius: br, rows_per_dsa: 64, ..DeviceGeometry::small(256) };
        let mut b = bank(g);
        for (row, sem) in ops {
            let before = b.counters().to_vec();
            let up = b.apply_activation(row, sem).unwrap();
            prop_assert!(b.max() <= g.counter_max());
            if sem == Semantics::VictimCount {
                prop_assert_eq!(b.get(row), 0);
            }
            for (r, (&x, &y)) in before.iter().zip(b.counters()).enumerate() {
                let r = r as u32;
                if x != y {
                    // Only the row or its in-DSA victims change, and each change is reported.
                    prop_assert_eq!(g.dsa_of(r), g.dsa_of(row));
                    prop_assert!(r.abs_diff(row) <= br);
                    prop_assert!(up.contains(&(r, y)));
                }
            }
        }
    }

    #[test]
    fn victim_sets_stay_in_dsa(row in 0u32..65536, br in 1u32..5) {
        let g = DeviceGeometry { blast_radius: br, ..DeviceGeometry::default() };
        let vs = victim_set(row, &g);
        prop_assert!(vs.iter().all(|&v| v != row && v.abs_diff(row) <= br && g.dsa_of(v) == g.dsa_of(row)));
        prop_assert!(vs.windows(2).all(|w| w[0] < w[1]));
        let expect = (row.saturating_sub(br)..=row + br)
            .filter(|&v| v != row && v / 512 == row / 512)
            .count();
        prop_assert_eq!(vs.len(), expect);
    }
}
