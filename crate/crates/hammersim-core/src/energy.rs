//! Latency-proportional energy model and per-window summaries.
//!
//! Energy of a command is its occupancy times a per-class coefficient. Units
//! are arbitrary: one Default-timing DSA access (ACT+PRE over tRC = 48 ns)
//! is 1.0. Each CSA activation performs one full counter-update sequence
//! (tRCD + update + tWR + tRP); the dual-CSA layout activates half-size
//! (32-row) subarrays, which are cheaper by a constant discount.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::counters::{
    counter_update_breakdown, csa_activations_for_event, CsaEvent, CsaKind, CsaLayout, CsaTiming,
};
use crate::dram::{refresh_slot_rows, DeviceGeometry, RefreshConfig, TimingLabel, TimingSet};
use crate::engine::{EngineSetup, EventLog, LogKind};
use crate::error::{config_err, Error, Result};
use crate::schemes::{Scheme, SchemeConfig};
use crate::Ps;

/// CSA energy of one counter update relative to one normal access (naive CSA).
pub const CSA_PER_ACCESS_NAIVE: f64 = 0.201;
/// Same for the optimized dual CSA, including the dual-activation cases.
pub const CSA_PER_ACCESS_OPTIMIZED: f64 = 0.198;
/// CSA energy of one REF relative to one normal access (naive CSA).
pub const CSA_PER_REF_NAIVE: f64 = 1.61;
/// Same for the optimized dual CSA.
pub const CSA_PER_REF_OPTIMIZED: f64 = 0.193;

/// Energy coefficients.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyModel {
    /// DSA energy per ns of row cycle (ACT+PRE, REF rows, RFM rows).
    pub dsa_per_ns: f64,
    /// CSA energy per ns of a full-size (64-row) CSA counter update.
    pub csa_per_ns: f64,
    /// Energy factor of a half-size (32-row) CSA activation.
    pub half_csa_discount: f64,
    /// CSA timing (sets the occupancy of one counter update).
    pub csa_timing: CsaTiming,
    /// Blast radius used for the update length.
    pub blast_radius: u32,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self::calibrated(CsaTiming::default(), 2)
    }
}

impl EnergyModel {
    /// Coefficients derived from the calibration ratios:
    /// - `dsa_per_ns = 1 / tRC(Default)`;
    /// - `csa_per_ns` makes one naive counter update cost 0.201 accesses;
    /// - the half-size discount `h` solves `0.201 * h * (1 + p) = 0.198`,
    ///   where `p = 3/128` is the fraction of ACTs needing two activations.
    pub fn calibrated(csa_timing: CsaTiming, blast_radius: u32) -> Self {
        let t_rc = TimingSet::builtin(TimingLabel::Default).t_rc.as_ns();
        let update = counter_update_breakdown(&csa_timing, blast_radius).total().as_ns();
        let dual_fraction = 3.0 / 128.0;
        Self {
            dsa_per_ns: 1.0 / t_rc,
            csa_per_ns: CSA_PER_ACCESS_NAIVE / update,
            half_csa_discount: CSA_PER_ACCESS_OPTIMIZED / (CSA_PER_ACCESS_NAIVE * (1.0 + dual_fraction)),
            csa_timing,
            blast_radius,
        }
    }

    fn csa_activation_energy(&self, layout: &CsaLayout) -> (f64, f64) {
        let b = counter_update_breakdown(&self.csa_timing, self.blast_radius);
        let scale = match layout.kind {
            CsaKind::InDsaRow => 0.0,
            CsaKind::NaiveCsa => 1.0,
            CsaKind::OptimizedDualCsa => self.half_csa_discount,
        };
        let actpre = (b.t_rcd + b.t_wr + b.t_rp).as_ns();
        let upd = b.update.as_ns();
        (actpre * scale, upd * scale)
    }

    fn validate(&self) -> Result<()> {
        if self.dsa_per_ns < 0.0 || self.csa_per_ns < 0.0 || self.half_csa_discount < 0.0 {
            return config_err("energy coefficients must be >= 0");
        }
        Ok(())
    }
}

/// Command class of the energy report.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum EnergyClass {
    /// Normal ACT+PRE on the DSA.
    DsaActPre,
    /// Rows refreshed by REF.
    RefRows,
    /// Rows activated by RFM and proactive mitigation.
    RfmRows,
    /// CSA activate/write-back/precharge.
    CsaActPre,
    /// CSA counter read-increment steps.
    CsaUpdate,
}

impl EnergyClass {
    /// All classes in report order.
    pub const ALL: [EnergyClass; 5] = [
        EnergyClass::DsaActPre,
        EnergyClass::RefRows,
        EnergyClass::RfmRows,
        EnergyClass::CsaActPre,
        EnergyClass::CsaUpdate,
    ];

    /// CSV spelling.
    pub fn name(self) -> &'static str {
        match self {
            EnergyClass::DsaActPre => "dsa_act_pre",
            EnergyClass::RefRows => "ref_rows",
            EnergyClass::RfmRows => "rfm_rows",
            EnergyClass::CsaActPre => "csa_act_pre",
            EnergyClass::CsaUpdate => "csa_update",
        }
    }
}

/// Energy of one class.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct ClassEnergy {
    /// Class.
    pub class: EnergyClass,
    /// Summed occupancy in ns.
    pub occupancy_ns: f64,
    /// Energy in model units.
    pub energy: f64,
}

/// Per-class energy of one log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    /// One entry per class, in [`EnergyClass::ALL`] order.
    pub classes: Vec<ClassEnergy>,
    /// Sum of the class energies.
    pub total: f64,
}

impl EnergyReport {
    /// Energy of `class`.
    pub fn energy(&self, class: EnergyClass) -> f64 {
        self.classes.iter().find(|c| c.class == class).map_or(0.0, |c| c.energy)
    }

    /// CSA energy (activation plus update).
    pub fn csa_energy(&self) -> f64 {
        self.energy(EnergyClass::CsaActPre) + self.energy(EnergyClass::CsaUpdate)
    }

    /// Total relative to `baseline` (1.0 when equal; 0.0 over an empty baseline).
    pub fn normalized_to(&self, baseline: &EnergyReport) -> f64 {
        if baseline.total == 0.0 {
            0.0
        } else {
            self.total / baseline.total
        }
    }

    /// Write `class,occupancy_ns,energy,fraction_of_total`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let io = |e: csv::Error| Error::Invariant(format!("csv write failed: {e}"));
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["class", "occupancy_ns", "energy", "fraction_of_total"]).map_err(io)?;
        for c in &self.classes {
            let frac = if self.total == 0.0 { 0.0 } else { c.energy / self.total };
            wr.write_record([
                c.class.name().to_string(),
                format!("{:.3}", c.occupancy_ns),
                format!("{:.6}", c.energy),
                format!("{frac:.6}"),
            ])
            .map_err(io)?;
        }
        wr.write_record(["total".to_string(), String::new(), format!("{:.6}", self.total), "1.000000".into()])
            .map_err(io)?;
        wr.flush().map_err(|e| Error::Invariant(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}

/// Energy of `log` as produced under `scheme` with counter storage `layout`.
///
/// CSA costs apply only to victim counting (the PRAC family keeps counters in
/// the DSA row and pays through its longer row cycle instead). Rejects logs
/// holding commands the scheme never issues.
pub fn energy_report(
    log: &EventLog,
    scheme: &SchemeConfig,
    layout: &CsaLayout,
    geometry: &DeviceGeometry,
    model: &EnergyModel,
) -> Result<EnergyReport> {
    model.validate()?;
    let mitigates = scheme.scheme != Scheme::Baseline;
    let t_rc = TimingSet::builtin(scheme.timing).t_rc.as_ns();
    let counts = scheme.scheme == Scheme::Pvac;
    let (csa_ap, csa_up) = model.csa_activation_energy(layout);
    let mut occ = [0f64; 5];
    let mut csa_acts = 0u64;
    for e in &log.events {
        match e.kind {
            LogKind::Act => {
                occ[0] += t_rc;
                if counts {
                    if let Some(r) = e.row {
                        csa_acts += u64::from(csa_activations_for_event(layout, geometry, &CsaEvent::NormalAct(r)));
                    }
                }
            }
            LogKind::Ref => {
                occ[1] += t_rc * e.rows.len() as f64;
                if counts {
                    csa_acts += u64::from(csa_activations_for_event(layout, geometry, &CsaEvent::Refresh(&e.rows)));
                }
            }
            LogKind::Rfm | LogKind::Proact | LogKind::Alert if !mitigates => {
                return config_err(format!("log holds {} but the scheme does not mitigate", e.kind.as_str()));
            }
            LogKind::Rfm | LogKind::Proact => {
                if e.kind == LogKind::Proact && scheme.proactive_period.is_none() {
                    return config_err("log holds PROACT but the scheme has no proactive mitigation");
                }
                occ[2] += t_rc * e.rows.len() as f64;
                if counts {
                    for &r in &e.rows {
                        csa_acts += u64::from(csa_activations_for_event(layout, geometry, &CsaEvent::NormalAct(r)));
                    }
                }
            }
            LogKind::Alert => {}
        }
    }
    let b = counter_update_breakdown(&model.csa_timing, model.blast_radius);
    occ[3] = csa_acts as f64 * (b.t_rcd + b.t_wr + b.t_rp).as_ns();
    occ[4] = csa_acts as f64 * b.update.as_ns();
    let energy = [
        occ[0] * model.dsa_per_ns,
        occ[1] * model.dsa_per_ns,
        occ[2] * model.dsa_per_ns,
        csa_acts as f64 * csa_ap * model.csa_per_ns,
        csa_acts as f64 * csa_up * model.csa_per_ns,
    ];
    let classes: Vec<ClassEnergy> = EnergyClass::ALL
        .iter()
        .zip(occ.iter().zip(energy.iter()))
        .map(|(&class, (&o, &en))| ClassEnergy { class, occupancy_ns: o, energy: en })
        .collect();
    let total = classes.iter().map(|c| c.energy).sum();
    Ok(EnergyReport { classes, total })
}

/// Mean CSA energy per normal access over every row of DSA 0, relative to
/// one Default-timing access.
pub fn csa_energy_per_access(model: &EnergyModel, layout: &CsaLayout, geometry: &DeviceGeometry) -> f64 {
    let (ap, up) = model.csa_activation_energy(layout);
    let per = (ap + up) * model.csa_per_ns;
    let rows = geometry.rows_per_dsa;
    let acts: u64 = (0..rows)
        .map(|r| u64::from(csa_activations_for_event(layout, geometry, &CsaEvent::NormalAct(r))))
        .sum();
    per * acts as f64 / f64::from(rows)
}

/// Mean CSA energy per REF over every REF slot that refreshes rows, relative
/// to one Default-timing access.
pub fn csa_energy_per_ref(
    model: &EnergyModel,
    layout: &CsaLayout,
    geometry: &DeviceGeometry,
    refresh: &RefreshConfig,
) -> f64 {
    let (ap, up) = model.csa_activation_energy(layout);
    let per = (ap + up) * model.csa_per_ns;
    let mut acts = 0u64;
    let mut slots = 0u64;
    for s in 0..refresh.refs_per_window() {
        let rows = refresh_slot_rows(geometry, refresh, s);
        if rows.is_empty() {
            continue;
        }
        slots += 1;
        acts += u64::from(csa_activations_for_event(layout, geometry, &CsaEvent::Refresh(&rows)));
    }
    if slots == 0 {
        0.0
    } else {
        per * acts as f64 / slots as f64
    }
}

/// Summary of one refresh window.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct WindowSummary {
    /// Window index.
    pub window_index: usize,
    /// `1 - blocked / window length`.
    pub bandwidth: f64,
    /// RFMs started in the window.
    pub rfm_count: u64,
    /// Alerts asserted in the window.
    pub alert_count: u64,
}

/// Per-window bandwidth and RFM/Alert counts recomputed from `log` alone
/// (REF blocks tRFC, RFM blocks tRFM) over the run length of `setup`.
pub fn window_summary(log: &EventLog, setup: &EngineSetup) -> Vec<WindowSummary> {
    let w = setup.refresh.t_refw;
    let end = setup.duration;
    let n = end.0.div_ceil(w.0).max(1) as usize;
    let mut blocked = vec![Ps::ZERO; n];
    let mut rfms = vec![0u64; n];
    let mut alerts = vec![0u64; n];
    let mut add = |s: Ps, e: Ps| {
        let mut a = s;
        let e = e.min(end);
        while a < e {
            let i = (a.0 / w.0) as usize;
            let b = e.min(w * (i as u64 + 1));
            blocked[i] += b - a;
            a = b;
        }
    };
    // Burst tails past the end of the run belong to no window.
    for ev in log.events.iter().filter(|e| e.time < end) {
        let i = (ev.time.0 / w.0) as usize;
        match ev.kind {
            LogKind::Ref => add(ev.time, ev.time + setup.scheme.t_rfc),
            LogKind::Rfm => {
                add(ev.time, ev.time + setup.abo.t_rfm);
                rfms[i] += 1;
            }
            LogKind::Alert => alerts[i] += 1,
            _ => {}
        }
    }
    (0..n)
        .map(|i| {
            let start = w * i as u64;
            let len = w.min(end.saturating_sub(start));
            let bandwidth = if len.0 == 0 { 1.0 } else { 1.0 - blocked[i].0 as f64 / len.0 as f64 };
            WindowSummary { window_index: i, bandwidth, rfm_count: rfms[i], alert_count: alerts[i] }
        })
        .collect()
}

/// Write `window_index,bandwidth,rfm_count,alert_count`.
pub fn write_window_csv<W: Write>(w: W, rows: &[WindowSummary]) -> Result<()> {
    let io = |e: csv::Error| Error::Invariant(format!("csv write failed: {e}"));
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["window_index", "bandwidth", "rfm_count", "alert_count"]).map_err(io)?;
    for r in rows {
        wr.write_record([
            r.window_index.to_string(),
            format!("{:.6}", r.bandwidth),
            r.rfm_count.to_string(),
            r.alert_count.to_string(),
        ])
        .map_err(io)?;
    }
    wr.flush().map_err(|e| Error::Invariant(format!("csv flush failed: {e}")))?;
    Ok(())
}
