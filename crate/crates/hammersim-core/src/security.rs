//! Worst-case security analysis: hammered-count (HC) formulas for the
//! feinting attack, the row-pool recurrences, N_BO solvers, the bandwidth
//! degradation bound and a brute-force oracle that replays the attack on the
//! simulator.
//!
//! Notation: `A` = ABO_ACT, `D` = ABO_Delay, `BR` = blast radius, `NR` =
//! number of attack rounds, `R_n` = pool size in round `n`.

use serde::{Deserialize, Serialize};

use crate::attack::{run_feinting, Discipline, FeintingSpec};
use crate::dram::{DeviceGeometry, TimingLabel, TimingSet};
use crate::engine::{audit, Engine, EngineSetup};
use crate::error::{config_err, Result};
use crate::par;
use crate::schemes::{Scheme, SchemeConfig};
use crate::Ps;

/// How many alerts a round of the pool recurrence produces.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RecurrenceVariant {
    /// `R_n = R_{n-1} - n_mit * floor((R_{n-1} - off) / (A + D))`; stops
    /// when the floor term is zero.
    #[default]
    EquationBody,
    /// Like `EquationBody` but the remainder of activations carries over to
    /// the next round, so the pool keeps shrinking once it is below `A + D`.
    Carry,
    /// One alert per `4 * (A + D)` activations, each mitigating `4 * n_mit`
    /// rows; stops when the floor term is zero.
    Textual,
}

/// Time an attack may take: it must complete within one refresh window.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackBudget {
    /// Available time (tREFW).
    pub window: Ps,
    /// Blocking time of one RFM.
    pub t_rfm: Ps,
}

impl Default for AttackBudget {
    fn default() -> Self {
        Self { window: Ps::ms(32), t_rfm: Ps::ns(350) }
    }
}

/// Parameters of the analysis.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisParams {
    /// Blast radius.
    pub br: u32,
    /// ACTs allowed inside tABO_ACT.
    pub abo_act: u32,
    /// ABO_Delay.
    pub abo_delay: u32,
    /// RFMs per Alert.
    pub n_mit: u32,
    /// Rows per bank (sets the r1 ranges).
    pub rows_per_bank: u32,
    /// Recurrence variant.
    pub variant: RecurrenceVariant,
    /// Attack-duration limit; `None` searches every r1 unconditionally.
    pub budget: Option<AttackBudget>,
}

impl AnalysisParams {
    /// Defaults for `n_mit`: BR 2, A 3, D = n_mit, 64K rows, `EquationBody`,
    /// one-window budget.
    pub fn new(n_mit: u32) -> Self {
        Self {
            br: 2,
            abo_act: 3,
            abo_delay: n_mit,
            n_mit,
            rows_per_bank: 65536,
            variant: RecurrenceVariant::EquationBody,
            budget: Some(AttackBudget::default()),
        }
    }

    /// Same parameters for a different bank size.
    pub fn with_rows(mut self, rows: u32) -> Self {
        self.rows_per_bank = rows;
        self
    }

    /// Inclusive r1 range of `discipline`: victim-based
    /// `[2*BR, floor(rows * 2BR / (2BR+1))]`, aggressor-based `[1, rows-1]`.
    pub fn r1_range(&self, discipline: Discipline) -> (u32, u32) {
        match discipline {
            Discipline::VictimBased => {
                let k = u64::from(2 * self.br);
                let hi = u64::from(self.rows_per_bank) * k / (k + 1);
                (2 * self.br, hi as u32)
            }
            Discipline::AggressorBased => (1, self.rows_per_bank.saturating_sub(1)),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.br == 0 || self.n_mit == 0 || self.abo_act + self.abo_delay == 0 {
            return config_err("analysis: br, n_mit and abo_act + abo_delay must be positive");
        }
        Ok(())
    }
}

/// Counting discipline analysed for `scheme`.
pub fn discipline_of(scheme: Scheme) -> Discipline {
    if scheme == Scheme::Pvac {
        Discipline::VictimBased
    } else {
        Discipline::AggressorBased
    }
}

/// Outcome of iterating the pool recurrence from one r1.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Recurrence {
    /// Terminating round index NR (1 when the pool starts at its goal size).
    pub nr: u32,
    /// Activations issued in completed rounds.
    pub online_acts: u64,
    /// Alerts raised in completed rounds.
    pub alerts: u64,
    /// True when the pool stopped shrinking above the goal size.
    pub stalled: bool,
}

/// Iterate the pool recurrence of `discipline` from `r1`.
///
/// Victim-based: offset 0, goal 1. Aggressor-based: offset BR (the first BR
/// rows are pre-activated by the RFMs of their neighbours), goal 2*BR.
pub fn pool_recurrence(r1: u32, discipline: Discipline, p: &AnalysisParams) -> Recurrence {
    let (off, goal) = match discipline {
        Discipline::VictimBased => (0, 1),
        Discipline::AggressorBased => (u64::from(p.br), u64::from(2 * p.br)),
    };
    let ad = u64::from(p.abo_act + p.abo_delay);
    let n_mit = u64::from(p.n_mit);
    let (div, per) = match p.variant {
        RecurrenceVariant::Textual => (4 * ad, 4 * n_mit),
        _ => (ad, n_mit),
    };
    let mut r = u64::from(r1);
    let mut n = 1u32;
    let mut acts = 0u64;
    let mut alerts = 0u64;
    let mut credit = 0u64;
    while r > goal {
        let a = if p.variant == RecurrenceVariant::Carry {
            let tot = credit + r;
            credit = tot % div;
            tot / div
        } else {
            r.saturating_sub(off) / div
        };
        let m = per * a;
        if m == 0 && p.variant != RecurrenceVariant::Carry {
            return Recurrence { nr: n, online_acts: acts, alerts, stalled: true };
        }
        acts += r;
        alerts += a;
        r = r.saturating_sub(m).max(goal);
        n += 1;
    }
    Recurrence { nr: n, online_acts: acts, alerts, stalled: false }
}

/// NR of the victim-based recurrence.
pub fn pool_recurrence_pvac(r1: u32, p: &AnalysisParams) -> u32 {
    pool_recurrence(r1, Discipline::VictimBased, p).nr
}

/// Victim-based HC: `(n_bo - 1) + NR + D + A + BR`.
pub fn hc_pvac_nr(n_bo: u32, nr: u32, p: &AnalysisParams) -> u64 {
    u64::from(n_bo.saturating_sub(1)) + u64::from(nr) + u64::from(p.abo_delay + p.abo_act + p.br)
}

/// Victim-based HC for pool size `r1`.
pub fn hc_pvac(n_bo: u32, p: &AnalysisParams, r1: u32) -> u64 {
    hc_pvac_nr(n_bo, pool_recurrence_pvac(r1, p), p)
}

/// Aggressor-based HC: `2BR(n_bo - 1) + 2BR*NR + D + A + BR - 1`.
pub fn hc_prac_nr(n_bo: u32, nr: u32, p: &AnalysisParams) -> u64 {
    let k = u64::from(2 * p.br);
    k * u64::from(n_bo.saturating_sub(1)) + k * u64::from(nr) + u64::from(p.abo_delay + p.abo_act + p.br) - 1
}

/// Aggressor-based HC for pool size `r1`.
pub fn hc_prac(n_bo: u32, p: &AnalysisParams, r1: u32) -> u64 {
    hc_prac_nr(n_bo, pool_recurrence(r1, Discipline::AggressorBased, p).nr, p)
}

/// Chronus HC: `2BR(n_bo - 1) + A + BR` (every row at N_BO is mitigated
/// within one Alert, so only the final ABO_ACT window adds activations).
pub fn hc_chronus(n_bo: u32, p: &AnalysisParams) -> u64 {
    u64::from(2 * p.br) * u64::from(n_bo.saturating_sub(1)) + u64::from(p.abo_act + p.br)
}

/// HC of `scheme` for a given NR.
pub fn hc_for(scheme: Scheme, n_bo: u32, nr: u32, p: &AnalysisParams) -> u64 {
    match scheme {
        Scheme::Chronus => hc_chronus(n_bo, p),
        s => match discipline_of(s) {
            Discipline::VictimBased => hc_pvac_nr(n_bo, nr, p),
            Discipline::AggressorBased => hc_prac_nr(n_bo, nr, p),
        },
    }
}

/// One point of the N_BO-vs-HC curve.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SecurityCurvePoint {
    /// Scheme.
    pub scheme: Scheme,
    /// RFMs per Alert.
    pub n_mit: u32,
    /// Target maximum hammered count.
    pub max_hc: u32,
    /// Largest safe N_BO (`None`: infeasible).
    pub n_bo: Option<u32>,
    /// Pool size attaining the worst NR at that N_BO.
    pub worst_r1: Option<u32>,
    /// Worst NR at that N_BO.
    pub nr: Option<u32>,
}

impl SecurityCurvePoint {
    /// True when some N_BO >= 1 meets the target.
    pub fn feasible(&self) -> bool {
        self.n_bo.is_some()
    }
}

/// Recurrence outcome for every r1 of a discipline's range.
#[derive(Clone, Debug)]
pub struct RecurrenceTable {
    /// Discipline.
    pub discipline: Discipline,
    /// Smallest r1.
    pub r1_lo: u32,
    /// Outcomes indexed by `r1 - r1_lo`.
    pub rows: Vec<Recurrence>,
}

impl RecurrenceTable {
    /// Evaluate the recurrence over the full r1 range (in parallel with the
    /// `parallel` feature).
    pub fn build(discipline: Discipline, p: &AnalysisParams) -> Self {
        let (lo, hi) = p.r1_range(discipline);
        let rows = par::map_range(lo..hi + 1, |r1| pool_recurrence(r1, discipline, p));
        Self { discipline, r1_lo: lo, rows }
    }

    /// Sequential build (reference for the parallel one).
    pub fn build_seq(discipline: Discipline, p: &AnalysisParams) -> Self {
        let (lo, hi) = p.r1_range(discipline);
        let rows = par::seq::map_range(lo..hi + 1, |r1| pool_recurrence(r1, discipline, p));
        Self { discipline, r1_lo: lo, rows }
    }

    // Largest N_BO for which each r1 (and every smaller one) fits the budget.
    // Setup cost: victim-based prepares one aggressor per 2BR victims.
    fn nbo_limits(&self, p: &AnalysisParams, t_rc: Ps) -> Vec<u64> {
        let Some(b) = p.budget else {
            return vec![u64::MAX; self.rows.len()];
        };
        let scale = match self.discipline {
            Discipline::VictimBased => u128::from(2 * p.br),
            Discipline::AggressorBased => 1,
        };
        let trc = u128::from(t_rc.0);
        let mut prefix = u64::MAX;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let r1 = u128::from(self.r1_lo) + i as u128;
                let online = scale * u128::from(rec.online_acts) * trc
                    + scale * u128::from(rec.alerts) * u128::from(p.n_mit) * u128::from(b.t_rfm.0);
                let avail = scale * u128::from(b.window.0);
                let lim = if online > avail {
                    0
                } else {
                    let k = 1 + (avail - online) / (r1 * trc);
                    k.min(u128::from(u64::MAX)) as u64
                };
                prefix = prefix.min(lim);
                prefix
            })
            .collect()
    }

    /// For each `n_bo` in `1..=max`: the worst `(NR, r1)` over pool sizes an
    /// attack with that N_BO can use. The smallest pool is always usable.
    pub fn worst_by_nbo(&self, p: &AnalysisParams, t_rc: Ps, max: u32) -> Vec<(u32, u32)> {
        let limits = self.nbo_limits(p, t_rc);
        let len = max as usize + 2;
        let mut bucket: Vec<Option<(u32, u32)>> = vec![None; len];
        let better = |a: Option<(u32, u32)>, b: (u32, u32)| match a {
            Some(x) if x.0 > b.0 || (x.0 == b.0 && x.1 <= b.1) => Some(x),
            _ => Some(b),
        };
        for (i, rec) in self.rows.iter().enumerate() {
            let k = (limits[i].min(max as u64 + 1)) as usize;
            bucket[k] = better(bucket[k], (rec.nr, self.r1_lo + i as u32));
        }
        let first = (self.rows[0].nr, self.r1_lo);
        let mut out = vec![(0, 0); len];
        let mut run: Option<(u32, u32)> = None;
        for k in (1..len).rev() {
            if let Some(b) = bucket[k] {
                run = better(run, b);
            }
            out[k] = better(run, first).unwrap_or(first);
        }
        out.truncate(max as usize + 1);
        out
    }
}

/// DSA row cycle of `scheme`.
pub fn scheme_t_rc(scheme: Scheme) -> Ps {
    let label = match scheme {
        Scheme::Prac | Scheme::Qprac | Scheme::Moat => TimingLabel::Prac,
        _ => TimingLabel::Default,
    };
    TimingSet::builtin(label).t_rc
}

/// Largest N_BO whose worst-case HC over every usable r1 is at most
/// `max_hc`; infeasible when no N_BO >= 1 qualifies.
pub fn solve_nbo(scheme: Scheme, max_hc: u32, p: &AnalysisParams) -> Result<SecurityCurvePoint> {
    p.validate()?;
    let mut pt = SecurityCurvePoint { scheme, n_mit: p.n_mit, max_hc, n_bo: None, worst_r1: None, nr: None };
    if scheme == Scheme::Baseline {
        return config_err("the baseline has no alert threshold");
    }
    if scheme == Scheme::Chronus {
        let base = u64::from(p.abo_act + p.br);
        if u64::from(max_hc) >= base {
            pt.n_bo = Some(((u64::from(max_hc) - base) / u64::from(2 * p.br)) as u32 + 1);
        }
        return Ok(pt);
    }
    let table = RecurrenceTable::build(discipline_of(scheme), p);
    Ok(solve_with_table(scheme, max_hc, p, &table))
}

/// [`solve_nbo`] against a prebuilt recurrence table.
pub fn solve_with_table(scheme: Scheme, max_hc: u32, p: &AnalysisParams, table: &RecurrenceTable) -> SecurityCurvePoint {
    let mut pt = SecurityCurvePoint { scheme, n_mit: p.n_mit, max_hc, n_bo: None, worst_r1: None, nr: None };
    let worst = table.worst_by_nbo(p, scheme_t_rc(scheme), max_hc);
    for k in (1..=max_hc).rev() {
        let (nr, r1) = worst[k as usize];
        if hc_for(scheme, k, nr, p) <= u64::from(max_hc) {
            pt.n_bo = Some(k);
            pt.worst_r1 = Some(r1);
            pt.nr = Some(nr);
            break;
        }
    }
    pt
}

/// The N_BO-vs-HC grid for `schemes` x `n_mits` x `max_hcs`, sorted by key.
/// Chronus appears once per HC (its RFM count is adaptive).
pub fn security_table(
    schemes: &[Scheme],
    n_mits: &[u32],
    max_hcs: &[u32],
    base: &AnalysisParams,
) -> Result<Vec<SecurityCurvePoint>> {
    let mut jobs = Vec::new();
    for &s in schemes {
        let mits: Vec<u32> = if s == Scheme::Chronus { vec![1] } else { n_mits.to_vec() };
        for m in mits {
            jobs.push((s, m));
        }
    }
    let per = par::map(&jobs, |&(s, m)| -> Result<Vec<SecurityCurvePoint>> {
        let p = AnalysisParams { n_mit: m, abo_delay: m, ..*base };
        p.validate()?;
        if s == Scheme::Chronus {
            return max_hcs.iter().map(|&h| solve_nbo(s, h, &p)).collect();
        }
        let table = RecurrenceTable::build_seq(discipline_of(s), &p);
        Ok(max_hcs.iter().map(|&h| solve_with_table(s, h, &p, &table)).collect())
    });
    let mut out = Vec::new();
    for r in per {
        out.extend(r?);
    }
    out.sort_by_key(|p| (p.scheme, p.n_mit, p.max_hc));
    Ok(out)
}

/// Blocking time of one RFM in the bandwidth bound.
pub const T_RFM: Ps = Ps::ns(350);

/// Largest bandwidth fraction an attacker can force into RFMs by hammering
/// one row at tRC: `n_mit*tRFM / (n_mit*tRFM + n_bo*tRC)`.
pub fn bw_bound(n_mit: u32, n_bo: u32, t_rc: Ps) -> f64 {
    let rfm = f64::from(n_mit) * T_RFM.0 as f64;
    rfm / (rfm + f64::from(n_bo) * t_rc.0 as f64)
}

/// Result of replaying the feinting attack on the simulator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OracleReport {
    /// Scheme.
    pub scheme: Scheme,
    /// Alert threshold.
    pub n_bo: u32,
    /// RFMs per Alert.
    pub n_mit: u32,
    /// Rows in the bank.
    pub rows: u32,
    /// Largest hammered count observed over all runs.
    pub observed_hc: u32,
    /// The r1 that produced it.
    pub observed_r1: u32,
    /// Analyzer bound for the same N_BO on this geometry.
    pub bound_hc: u64,
    /// Pool sizes replayed.
    pub runs: usize,
    /// Every run's command log passed the timing auditor.
    pub audit_ok: bool,
}

impl OracleReport {
    /// Observed HC within the analyzer bound.
    pub fn sound(&self) -> bool {
        u64::from(self.observed_hc) <= self.bound_hc
    }
}

/// Analyzer HC bound for `cfg` on a bank of `rows` rows, maximised over every
/// r1 (no time budget: the oracle does not limit pool sizes by time either).
pub fn analyzer_bound(cfg: &SchemeConfig, geometry: &DeviceGeometry) -> u64 {
    let p = AnalysisParams {
        br: geometry.blast_radius,
        budget: None,
        ..AnalysisParams::new(cfg.n_mit).with_rows(geometry.rows_per_bank)
    };
    if cfg.scheme == Scheme::Chronus {
        return hc_chronus(cfg.n_bo, &p);
    }
    let table = RecurrenceTable::build_seq(discipline_of(cfg.scheme), &p);
    let nr = table.rows.iter().map(|r| r.nr).max().unwrap_or(1);
    hc_for(cfg.scheme, cfg.n_bo, nr, &p)
}

/// Default pool sizes replayed by the oracle: the range ends plus a spread.
pub fn oracle_r1s(discipline: Discipline, geometry: &DeviceGeometry) -> Vec<u32> {
    let lo = FeintingSpec::r1_range(discipline, geometry).0;
    let hi = FeintingSpec::max_placeable(discipline, geometry);
    let mut v: Vec<u32> = [lo, lo + 1, lo + 3, 8, 16, 32, 64, 128, hi / 2, hi - 1, hi]
        .into_iter()
        .filter(|&r| (lo..=hi).contains(&r))
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Replay the closed-loop feinting attack against the full engine on a small
/// bank for each pool size in `r1s`, one refresh window each, and report the
/// largest true hammered count any row reached.
pub fn brute_force_oracle(cfg: &SchemeConfig, geometry: DeviceGeometry, r1s: &[u32]) -> Result<OracleReport> {
    if geometry.rows_per_bank > 4096 {
        return config_err("oracle: rows_per_bank must be <= 4096");
    }
    cfg.validate()?;
    let discipline = discipline_of(cfg.scheme);
    let window = crate::dram::RefreshConfig::default().t_refw;
    let runs = par::map(r1s, |&r1| -> Result<(u32, u32, bool)> {
        // Counter storage only affects energy accounting; in-DSA fits any bank.
        let mut setup = EngineSetup::new(cfg.clone(), window).with_geometry(geometry).tracking(true);
        setup.layout = crate::counters::CsaLayout::in_dsa();
        let abo = setup.abo;
        let mut e = Engine::new(setup.clone())?;
        let spec = FeintingSpec {
            discipline,
            r1,
            n_bo: cfg.n_bo,
            n_mit: cfg.n_mit,
            abo_act: abo.abo_act,
            abo_delay: abo.abo_delay,
        };
        run_feinting(&mut e, &spec)?;
        let out = e.finish()?;
        let ok = audit(&out.log, &setup).ok();
        Ok((out.metrics.max_disturbance, r1, ok))
    });
    let mut rep = OracleReport {
        scheme: cfg.scheme,
        n_bo: cfg.n_bo,
        n_mit: cfg.n_mit,
        rows: geometry.rows_per_bank,
        observed_hc: 0,
        observed_r1: 0,
        bound_hc: analyzer_bound(cfg, &geometry),
        runs: r1s.len(),
        audit_ok: true,
    };
    for r in runs {
        let (hc, r1, ok) = r?;
        rep.audit_ok &= ok;
        if hc > rep.observed_hc {
            rep.observed_hc = hc;
            rep.observed_r1 = r1;
        }
    }
    Ok(rep)
}
