use hammersim_core::counters::{CsaLayout, CsaTiming};
use hammersim_core::dram::{DeviceGeometry, RefreshConfig, RefreshOrder};
use hammersim_core::energy::{
    csa_energy_per_access, csa_energy_per_ref, energy_report, window_summary, write_window_csv, EnergyClass,
    EnergyModel, CSA_PER_ACCESS_NAIVE, CSA_PER_ACCESS_OPTIMIZED, CSA_PER_REF_NAIVE, CSA_PER_REF_OPTIMIZED,
};
use hammersim_core::engine::{run, saturation_act_stream, EngineSetup, EventLog, LogEvent, LogKind};
use hammersim_core::schemes::{Scheme, SchemeConfig};
use hammersim_core::Ps;
use proptest::prelude::*;

fn ev(kind: LogKind, row: Option<u32>, rows: Vec<u32>) -> LogEvent {
    LogEvent { time: Ps::ZERO, kind, row, counter_after: None, rows }
}

fn hand_log() -> EventLog {
    EventLog {
        bank: 0,
        events: vec![
            ev(LogKind::Act, Some(10), vec![]),
            ev(LogKind::Act, Some(128), vec![]),
            ev(LogKind::Ref, None, (0..8).collect()),
            ev(LogKind::Alert, Some(10), vec![]),
            ev(LogKind::Rfm, Some(10), vec![9, 11]),
        ],
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn calibration_ratios_within_one_percent() {
    let m = EnergyModel::default();
    let g = DeviceGeometry::default();
    assert!(rel(csa_energy_per_access(&m, &CsaLayout::naive(), &g), CSA_PER_ACCESS_NAIVE) < 0.01);
    assert!(rel(csa_energy_per_access(&m, &CsaLayout::optimized_dual(), &g), CSA_PER_ACCESS_OPTIMIZED) < 0.01);
    assert_eq!(csa_energy_per_access(&m, &CsaLayout::in_dsa(), &g), 0.0);
    let striped = RefreshConfig { order: RefreshOrder::DsaStriped, ..RefreshConfig::default() };
    assert!(rel(csa_energy_per_ref(&m, &CsaLayout::naive(), &g, &striped), CSA_PER_REF_NAIVE) < 0.01);
    assert!(rel(csa_energy_per_ref(&m, &CsaLayout::optimized_dual(), &g, &striped), CSA_PER_REF_OPTIMIZED) < 0.01);
}

#[test]
fn hand_counted_log() {
    let g = DeviceGeometry::default();
    let m = EnergyModel::default();
    let pvac = SchemeConfig::preset(Scheme::Pvac, 16, 4);
    // DSA: 2 ACTs + 8 REF rows + 2 RFM rows, one Default row cycle each.
    // Naive CSA: one activation per ACT, one for the single-DSA REF, one per RFM row.
    let r = energy_report(&hand_log(), &pvac, &CsaLayout::naive(), &g, &m).unwrap();
    assert!((r.energy(EnergyClass::DsaActPre) - 2.0).abs() < 1e-9);
    assert!((r.energy(EnergyClass::RefRows) - 8.0).abs() < 1e-9);
    assert!((r.energy(EnergyClass::RfmRows) - 2.0).abs() < 1e-9);
    assert!((r.csa_energy() - 5.0 * CSA_PER_ACCESS_NAIVE).abs() < 1e-9);
    assert!((r.total - 12.0 - 5.0 * CSA_PER_ACCESS_NAIVE).abs() < 1e-9);
    // Dual CSA: row 128 needs both halves, everything else one half-size activation.
    let d = energy_report(&hand_log(), &pvac, &CsaLayout::optimized_dual(), &g, &m).unwrap();
    let h = m.half_csa_discount;
    assert!((d.csa_energy() - 6.0 * h * CSA_PER_ACCESS_NAIVE).abs() < 1e-9);
    // PRAC keeps counters in the DSA: no CSA term, 52 ns row cycles.
    let prac = SchemeConfig::preset(Scheme::Prac, 16, 4);
    let p = energy_report(&hand_log(), &prac, &CsaLayout::naive(), &g, &m).unwrap();
    assert_eq!(p.csa_energy(), 0.0);
    assert!((p.total - 12.0 * 52.0 / 48.0).abs() < 1e-9);
}

#[test]
fn commands_the_scheme_never_issues_are_rejected() {
    let g = DeviceGeometry::default();
    let m = EnergyModel::default();
    let base = SchemeConfig::preset(Scheme::Baseline, 1, 1);
    assert!(energy_report(&hand_log(), &base, &CsaLayout::in_dsa(), &g, &m).is_err());
    let mut no_proact = SchemeConfig::preset(Scheme::Prac, 16, 4);
    no_proact.proactive_period = None;
    let log = EventLog { bank: 0, events: vec![ev(LogKind::Proact, Some(4), vec![4])] };
    assert!(energy_report(&log, &no_proact, &CsaLayout::in_dsa(), &g, &m).is_err());
    let bad = EnergyModel { dsa_per_ns: -1.0, ..m };
    assert!(energy_report(&EventLog::default(), &no_proact, &CsaLayout::in_dsa(), &g, &bad).is_err());
}

#[test]
fn empty_log_and_normalisation() {
    let g = DeviceGeometry::default();
    let m = EnergyModel::default();
    let pvac = SchemeConfig::preset(Scheme::Pvac, 16, 4);
    let empty = energy_report(&EventLog::default(), &pvac, &CsaLayout::naive(), &g, &m).unwrap();
    assert_eq!(empty.total, 0.0);
    assert_eq!(empty.classes.len(), 5);
    let r = energy_report(&hand_log(), &pvac, &CsaLayout::naive(), &g, &m).unwrap();
    assert_eq!(r.normalized_to(&r), 1.0);
    assert_eq!(r.normalized_to(&empty), 0.0);
}

#[test]
fn report_csv_has_total_row() {
    let r = energy_report(
        &hand_log(),
        &SchemeConfig::preset(Scheme::Pvac, 16, 4),
        &CsaLayout::naive(),
        &DeviceGeometry::default(),
        &EnergyModel::default(),
    )
    .unwrap();
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "class,occupancy_ns,energy,fraction_of_total");
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("dsa_act_pre,96.000,2.000000,"));
    assert!(lines[6].starts_with("total,,"));
}

#[test]
fn window_summary_of_empty_log() {
    let setup = EngineSetup::new(SchemeConfig::preset(Scheme::Prac, 16, 4), Ps::ms(64));
    let s = window_summary(&EventLog::default(), &setup);
    assert_eq!(s.len(), 2);
    assert!(s.iter().all(|w| w.bandwidth == 1.0 && w.rfm_count == 0 && w.alert_count == 0));
    let mut buf = Vec::new();
    write_window_csv(&mut buf, &s).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("window_index,bandwidth,rfm_count,alert_count\n0,"));
}

#[test]
fn prac_costs_more_per_access_than_default() {
    let g = DeviceGeometry::small(512);
    let m = EnergyModel::default();
    let run_for = |s| {
        let setup = EngineSetup::new(SchemeConfig::preset(s, 255, 1), Ps::us(20)).with_geometry(g);
        let out = run(setup, saturation_act_stream(0, vec![100, 300])).unwrap();
        let rep = energy_report(&out.log, &SchemeConfig::preset(s, 255, 1), &CsaLayout::in_dsa(), &g, &m).unwrap();
        rep.energy(EnergyClass::DsaActPre) / out.metrics.acts_issued as f64
    };
    let ratio = run_for(Scheme::Prac) / run_for(Scheme::Baseline);
    assert!((ratio - 52.0 / 48.0).abs() < 1e-9);
}

#[test]
fn scaled_timing_changes_update_cost() {
    let slow = EnergyModel::calibrated(CsaTiming::scaled(262144, 1.0806), 2);
    // Calibration pins one naive update at 0.201 accesses whatever the timing.
    let g = DeviceGeometry::default();
    assert!(rel(csa_energy_per_access(&slow, &CsaLayout::naive(), &g), CSA_PER_ACCESS_NAIVE) < 1e-9);
    assert!(slow.csa_per_ns < EnergyModel::default().csa_per_ns);
}

fn event() -> impl Strategy<Value = LogEvent> {
    prop_oneof![
        (0u32..65536).prop_map(|r| ev(LogKind::Act, Some(r), vec![])),
        (0u32..8192).prop_map(|s| ev(LogKind::Ref, None, (s * 8..s * 8 + 8).collect())),
        prop::collection::vec(0u32..65536, 0..5).prop_map(|rows| ev(LogKind::Rfm, rows.first().copied(), rows)),
        (0u32..65536).prop_map(|r| ev(LogKind::Alert, Some(r), vec![])),
    ]
}

proptest! {
    #[test]
    fn energy_is_additive_over_logs(
        a in prop::collection::vec(event(), 0..40),
        b in prop::collection::vec(event(), 0..40),
        layout in prop_oneof![Just(CsaLayout::naive()), Just(CsaLayout::optimized_dual()), Just(CsaLayout::in_dsa())],
    ) {
        let g = DeviceGeometry::default();
        let m = EnergyModel::default();
        let s = SchemeConfig::preset(Scheme::Pvac, 16, 4);
        let rep = |events: Vec<LogEvent>| energy_report(&EventLog { bank: 0, events }, &s, &layout, &g, &m).unwrap();
        let ra = rep(a.clone());
        let rb = rep(b.clone());
        let rab = rep([a.clone(), b].concat());
        prop_assert!((rab.total - ra.total - rb.total).abs() < 1e-6);
        let sum: f64 = rab.classes.iter().map(|c| c.energy).sum();
        prop_assert!((sum - rab.total).abs() < 1e-9);
        prop_assert!(rab.classes.iter().all(|c| c.energy >= 0.0));
        // REFs never cost more in the dual layout (one half-size activation
        // vs one per DSA touched); single boundary ACTs can, only the mean is lower.
        let refs: Vec<LogEvent> = a.into_iter().filter(|e| e.kind == LogKind::Ref).collect();
        let naive = energy_report(&EventLog { bank: 0, events: refs.clone() }, &s, &CsaLayout::naive(), &g, &m).unwrap();
        let dual = energy_report(&EventLog { bank: 0, events: refs }, &s, &CsaLayout::optimized_dual(), &g, &m).unwrap();
        prop_assert!(dual.csa_energy() <= naive.csa_energy() + 1e-9);
    }
}
