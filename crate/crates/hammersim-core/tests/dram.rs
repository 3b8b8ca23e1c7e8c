use hammersim_core::dram::{
    idle_bandwidth, refresh_slot_rows, rows_per_refresh, DeviceGeometry, RefreshConfig, RefreshMode,
    RefreshOrder, TimingLabel, TimingSet,
};
use hammersim_core::{Error, Ps};
use proptest::prelude::*;

#[test]
fn builtin_timing_sets_match_the_reference_table() {
    let ns = Ps::from_ns;
    let d = TimingSet::builtin(TimingLabel::Default);
    assert_eq!((d.t_ras, d.t_rp, d.t_rc, d.t_rtp, d.t_wr, d.t_rcd), (ns(32.0), ns(16.0), ns(48.0), ns(7.5), ns(30.0), ns(16.0)));
    let p = TimingSet::builtin(TimingLabel::Prac);
    assert_eq!((p.t_ras, p.t_rp, p.t_rc, p.t_rtp, p.t_wr, p.t_rcd), (ns(16.0), ns(36.0), ns(52.0), ns(5.0), ns(10.0), ns(16.0)));
    let c = TimingSet::builtin(TimingLabel::Csa);
    assert_eq!((c.t_rcd, c.t_ras, c.t_rp, c.t_wr), (ns(7.6), ns(16.7), ns(4.1), ns(19.2)));
    for l in [TimingLabel::Default, TimingLabel::Prac, TimingLabel::Csa] {
        TimingSet::builtin(l).validate().unwrap();
    }
}

#[test]
fn timing_validation_rejects_short_trc_and_zeros() {
    let mut t = TimingSet::builtin(TimingLabel::Default);
    t.t_rc = Ps::ns(20);
    assert!(matches!(t.validate(), Err(Error::Config(_))));
    let mut t = TimingSet::builtin(TimingLabel::Prac);
    t.t_wr = Ps::ZERO;
    assert!(t.validate().is_err());
}

#[test]
fn rows_per_refresh_examples() {
    let r = RefreshConfig::default();
    assert_eq!(r.refs_per_window(), 8205);
    assert_eq!(rows_per_refresh(&DeviceGeometry::default(), &r), 8);
    assert_eq!(rows_per_refresh(&DeviceGeometry::small(512), &r), 1);
    let fine = RefreshConfig::for_mode(RefreshMode::AllBankFine);
    assert_eq!(rows_per_refresh(&DeviceGeometry::default(), &fine), 4);
}

#[test]
fn idle_bandwidth_examples() {
    let r = RefreshConfig::default();
    assert!((idle_bandwidth(&r) - 0.9244).abs() < 5e-5);
    assert_eq!(idle_bandwidth(&r.with_rfc(Ps::ZERO)), 1.0);
    assert!((idle_bandwidth(&r.with_rfc(Ps::ns(410))) - 0.8949).abs() < 5e-5);
}

#[test]
fn refresh_config_validation() {
    RefreshConfig::default().validate().unwrap();
    assert!(RefreshConfig::default().with_rfc(Ps::us(4)).validate().is_err());
    let mut r = RefreshConfig::default();
    r.t_refi = r.t_refw;
    assert!(r.validate().is_err());
}

#[test]
fn geometry_validation() {
    DeviceGeometry::default().validate().unwrap();
    let bad = [
        DeviceGeometry { rows_per_dsa: 500, ..DeviceGeometry::default() },
        DeviceGeometry { blast_radius: 0, ..DeviceGeometry::default() },
        DeviceGeometry { counter_bits: 0, ..DeviceGeometry::default() },
        DeviceGeometry { banks: 0, ..DeviceGeometry::default() },
    ];
    for g in bad {
        assert!(matches!(g.validate(), Err(Error::Config(_))), "{g:?}");
    }
    assert_eq!(DeviceGeometry::default().counter_max(), 255);
    assert_eq!(DeviceGeometry::default().dsas(), 128);
}

#[test]
fn sequential_slots_are_ascending_and_spare_slots_empty() {
    let g = DeviceGeometry::default();
    let r = RefreshConfig::default();
    assert_eq!(refresh_slot_rows(&g, &r, 0), (0..8).collect::<Vec<_>>());
    assert_eq!(refresh_slot_rows(&g, &r, 8191), (65528..65536).collect::<Vec<_>>());
    assert!(refresh_slot_rows(&g, &r, 8192).is_empty());
    assert!(refresh_slot_rows(&g, &r, 8204).is_empty());
}

#[test]
fn striped_order_covers_every_row_once() {
    let g = DeviceGeometry::default();
    let r = RefreshConfig { order: RefreshOrder::DsaStriped, ..RefreshConfig::default() };
    let mut seen = vec![0u8; g.rows_per_bank as usize];
    for slot in 0..r.refs_per_window() {
        for row in refresh_slot_rows(&g, &r, slot) {
            seen[row as usize] += 1;
        }
    }
    assert!(seen.iter().all(|&c| c == 1));
    // One row in each of 8 DSAs spaced two apart.
    assert_eq!(refresh_slot_rows(&g, &r, 0), vec![0, 1024, 2048, 3072, 4096, 5120, 6144, 7168]);
}

#[test]
fn ps_conversions() {
    assert_eq!(Ps::from_ns(3900.0), Ps(3_900_000));
    assert_eq!(Ps::from_ns(0.8304), Ps(830));
    assert_eq!(Ps::ms(32), Ps::us(32_000));
    assert_eq!(Ps::ns(48).as_ns(), 48.0);
    assert_eq!(Ps::ns(5).saturating_sub(Ps::ns(9)), Ps::ZERO);
    assert_eq!([Ps::ns(1), Ps::ns(2)].into_iter().sum::<Ps>(), Ps::ns(3));
}

proptest! {
    #[test]
    fn every_row_refreshed_within_a_window(rows_log in 9u32..18, refi_ns in 1000u64..8000) {
        let g = DeviceGeometry::small(1 << rows_log);
        let r = RefreshConfig { t_refi: Ps::ns(refi_ns), ..RefreshConfig::default() };
        prop_assert!(u64::from(rows_per_refresh(&g, &r)) * r.refs_per_window() >= u64::from(g.rows_per_bank));
        let mut seen = vec![false; g.rows_per_bank as usize];
        for s in 0..r.refs_per_window() {
            for row in refresh_slot_rows(&g, &r, s) {
                seen[row as usize] = true;
            }
        }
        prop_assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn idle_bandwidth_monotone(rfc in 1u64..3000, d in 1u64..500, refi in 3100u64..8000) {
        let base = RefreshConfig { t_refi: Ps::ns(refi), t_rfc: Ps::ns(rfc), ..RefreshConfig::default() };
        let more_rfc = base.with_rfc(Ps::ns(rfc + d));
        let longer_refi = RefreshConfig { t_refi: Ps::ns(refi + d), ..base };
        prop_assert!(idle_bandwidth(&more_rfc) < idle_bandwidth(&base));
        prop_assert!(idle_bandwidth(&longer_refi) > idle_bandwidth(&base));
    }
}
