//! Mitigation schemes as event-driven state machines over a [`CounterBank`].
//!
//! Every scheme keeps a top-K [`PriorityQueue`] fed with each counter update.
//! Aggressor-based schemes (PRAC, QPRAC, MOAT, Chronus) mitigate one
//! aggressor per RFM by activating its victims and clearing its counter;
//! PVAC refreshes the four highest-count victims per RFM.

mod queue;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

pub use queue::PriorityQueue;

use crate::counters::{victim_set, CounterBank, CsaLayout, Semantics, Updates};
use crate::dram::{DeviceGeometry, TimingLabel};
use crate::error::{config_err, Result};
use crate::Ps;

/// Mitigation scheme.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// Plain PRAC with the ABO protocol.
    #[serde(alias = "PRAC")]
    Prac,
    /// Per-victim-row hammered counting.
    #[serde(alias = "PVAC")]
    Pvac,
    /// Chronus: adaptive RFM count, no refresh-driven counter updates.
    Chronus,
    /// QPRAC: PRAC plus threshold-gated proactive mitigation every tREFI.
    #[serde(alias = "QPRAC")]
    Qprac,
    /// MOAT: proactive mitigation every 4 tREFI, tRFC = 410 ns, one RFM.
    #[serde(alias = "MOAT")]
    Moat,
    /// No mitigation and Default timing (energy baseline).
    Baseline,
}

impl Scheme {
    /// The five mitigation schemes (excludes the baseline).
    pub const ALL: [Scheme; 5] =
        [Scheme::Prac, Scheme::Pvac, Scheme::Chronus, Scheme::Qprac, Scheme::Moat];

    /// Short display name.
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Prac => "PRAC",
            Scheme::Pvac => "PVAC",
            Scheme::Chronus => "Chronus",
            Scheme::Qprac => "QPRAC",
            Scheme::Moat => "MOAT",
            Scheme::Baseline => "Baseline",
        }
    }
}

/// Full parameterisation of one scheme.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    /// Which scheme.
    pub scheme: Scheme,
    /// Alert threshold.
    pub n_bo: u32,
    /// RFMs per Alert (Chronus: ABO_Delay only, RFM count is adaptive).
    pub n_mit: u32,
    /// Proactive-mitigation threshold on the queue maximum.
    pub proactive_threshold: Option<u32>,
    /// Proactive-mitigation period in REF commands.
    pub proactive_period: Option<u32>,
    /// Timing set used for the DSA.
    pub timing: TimingLabel,
    /// REF duration.
    pub t_rfc: Ps,
    /// Counter rule on normal ACTs.
    pub counter_semantics: Semantics,
    /// Priority-queue depth.
    pub queue_depth: usize,
}

/// Default queue depth: 4 RFMs x 4 rows + 4 proactive rows.
pub const DEFAULT_QUEUE_DEPTH: usize = 20;

impl SchemeConfig {
    /// Standard configuration of `scheme` (threshold/period/tRFC/timing per scheme).
    pub fn preset(scheme: Scheme, n_bo: u32, n_mit: u32) -> Self {
        let half = Some((n_bo / 2).max(1));
        let (thr, period, timing, rfc, sem, n_mit) = match scheme {
            Scheme::Prac => (None, None, TimingLabel::Prac, 295, Semantics::AggressorCount, n_mit),
            Scheme::Chronus => {
                (None, Some(2), TimingLabel::Default, 295, Semantics::AggressorCount, n_mit)
            }
            Scheme::Qprac => (half, Some(1), TimingLabel::Prac, 295, Semantics::AggressorCount, n_mit),
            Scheme::Moat => (half, Some(4), TimingLabel::Prac, 410, Semantics::AggressorCount, 1),
            Scheme::Pvac => (half, Some(1), TimingLabel::Default, 295, Semantics::VictimCount, n_mit),
            Scheme::Baseline => (None, None, TimingLabel::Default, 295, Semantics::NoCount, n_mit),
        };
        Self {
            scheme,
            n_bo,
            n_mit,
            proactive_threshold: thr,
            proactive_period: period,
            timing,
            t_rfc: Ps::ns(rfc),
            counter_semantics: sem,
            queue_depth: DEFAULT_QUEUE_DEPTH,
        }
    }

    /// Check the per-scheme invariants.
    pub fn validate(&self) -> Result<()> {
        let name = self.scheme.name();
        if self.n_bo == 0 {
            return config_err(format!("{name}: n_bo must be >= 1"));
        }
        if !matches!(self.n_mit, 1 | 2 | 4) {
            return config_err(format!("{name}: n_mit must be 1, 2 or 4 (got {})", self.n_mit));
        }
        if self.proactive_period == Some(0) {
            return config_err(format!("{name}: proactive_period must be >= 1"));
        }
        if self.queue_depth == 0 && self.scheme != Scheme::Baseline {
            return config_err(format!("{name}: queue_depth must be >= 1"));
        }
        let want = match self.scheme {
            Scheme::Pvac => (Semantics::VictimCount, TimingLabel::Default),
            Scheme::Prac | Scheme::Qprac | Scheme::Moat => {
                (Semantics::AggressorCount, TimingLabel::Prac)
            }
            Scheme::Chronus => (Semantics::AggressorCount, TimingLabel::Default),
            Scheme::Baseline => (Semantics::NoCount, TimingLabel::Default),
        };
        if self.counter_semantics != want.0 {
            return config_err(format!("{name} requires {:?} counting", want.0));
        }
        if self.timing != want.1 {
            return config_err(format!("{name} requires {:?} timing", want.1));
        }
        if self.scheme == Scheme::Moat && (self.n_mit != 1 || self.t_rfc != Ps::ns(410)) {
            return config_err("MOAT requires n_mit = 1 and tRFC = 410 ns");
        }
        Ok(())
    }

    /// Counter rule applied to rows refreshed by REF.
    pub fn refresh_semantics(&self) -> Semantics {
        match self.scheme {
            Scheme::Pvac => Semantics::VictimCount,
            Scheme::Chronus | Scheme::Baseline => Semantics::NoCount,
            _ => Semantics::AggressorCount,
        }
    }

    /// Counter rule applied to victims activated by an RFM or proactive refresh.
    pub fn mitigation_semantics(&self) -> Semantics {
        match self.scheme {
            Scheme::Pvac => Semantics::VictimCount,
            // Counting Chronus's RFM-induced ACTs makes a drain-all burst
            // feed itself forever at small N_BO.
            Scheme::Chronus | Scheme::Baseline => Semantics::NoCount,
            _ => Semantics::AggressorCount,
        }
    }
}

/// What a scheme asks the controller to do.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MitigationAction {
    /// Nothing.
    None,
    /// Assert Alert; `rows` are the counters at or above N_BO that triggered it.
    Alert(Vec<u32>),
    /// Rows refreshed by an RFM.
    RfmRefresh(Vec<u32>),
    /// Rows refreshed proactively inside tRFC.
    ProactiveRefresh(Vec<u32>),
}

/// Result of one mitigation step (RFM or proactive).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Mitigation {
    /// Aggressor whose counter was cleared (aggressor schemes).
    pub aggressor: Option<u32>,
    /// Rows physically refreshed, in refresh order.
    pub refreshed: SmallVec<[u32; 8]>,
    /// Counter updates, in order.
    pub updates: Vec<(u32, u16)>,
}

impl Mitigation {
    /// True when nothing was mitigated.
    pub fn is_empty(&self) -> bool {
        self.aggressor.is_none() && self.refreshed.is_empty()
    }
}

/// Mutable per-bank scheme state.
#[derive(Clone, Debug)]
pub struct SchemeState {
    /// Configuration.
    pub cfg: SchemeConfig,
    /// Counters.
    pub bank: CounterBank,
    queue: PriorityQueue,
    // Chronus mitigates every row at or above N_BO, so it tracks them all.
    over: BTreeSet<u32>,
    refs_seen: u64,
    empty_rfms: u64,
}

/// What a REF did: Alerts raised, proactive mitigations, counter updates.
pub type RefreshOutcome = (Vec<MitigationAction>, Vec<Mitigation>, Vec<(u32, u16)>);

impl SchemeState {
    /// Fresh state with zeroed counters.
    pub fn new(cfg: SchemeConfig, geometry: DeviceGeometry, layout: CsaLayout) -> Result<Self> {
        cfg.validate()?;
        let queue = PriorityQueue::new(cfg.queue_depth);
        Ok(Self {
            bank: CounterBank::new(geometry, layout)?,
            cfg,
            queue,
            over: BTreeSet::new(),
            refs_seen: 0,
            empty_rfms: 0,
        })
    }

    /// The priority queue.
    pub fn queue(&self) -> &PriorityQueue {
        &self.queue
    }

    /// RFMs that found nothing to mitigate (diagnostic).
    pub fn empty_rfms(&self) -> u64 {
        self.empty_rfms
    }

    fn track(&mut self, updates: &[(u32, u16)]) {
        let n_bo = self.cfg.n_bo;
        for &(row, c) in updates {
            self.queue.insert_or_update(row, c);
            if self.cfg.scheme == Scheme::Chronus {
                if u32::from(c) >= n_bo {
                    self.over.insert(row);
                } else {
                    self.over.remove(&row);
                }
            }
        }
    }

    fn activate(&mut self, row: u32, sem: Semantics) -> Result<Updates> {
        let up = self.bank.apply_activation(row, sem)?;
        self.track(&up);
        Ok(up)
    }

    fn alert_rows(&self, updates: &[(u32, u16)]) -> Vec<u32> {
        if self.cfg.scheme == Scheme::Baseline {
            return Vec::new();
        }
        updates
            .iter()
            .filter(|&&(_, c)| u32::from(c) >= self.cfg.n_bo)
            .map(|&(r, _)| r)
            .collect()
    }

    /// Normal ACT of `row`. Returns `Alert` when an updated counter reaches N_BO
    /// (the controller decides whether the Alert can be asserted now).
    pub fn on_act(&mut self, row: u32) -> Result<(MitigationAction, Updates)> {
        let up = self.activate(row, self.cfg.counter_semantics)?;
        let hot = self.alert_rows(&up);
        let action = if hot.is_empty() { MitigationAction::None } else { MitigationAction::Alert(hot) };
        Ok((action, up))
    }

    /// A REF refreshed `rows`. Applies the scheme's refresh rule, then runs
    /// proactive mitigation when this REF lands on the proactive period.
    pub fn on_refresh(&mut self, rows: &[u32]) -> Result<RefreshOutcome> {
        let sem = self.cfg.refresh_semantics();
        let mut updates = Vec::new();
        for &r in rows {
            updates.extend(self.activate(r, sem)?);
        }
        let mut actions = Vec::new();
        let hot = self.alert_rows(&updates);
        if !hot.is_empty() {
            actions.push(MitigationAction::Alert(hot));
        }
        let mut done = Vec::new();
        self.refs_seen += 1;
        if let Some(period) = self.cfg.proactive_period {
            let due = (self.refs_seen - 1).is_multiple_of(u64::from(period));
            let max = u32::from(self.queue.max_count());
            let armed = match self.cfg.proactive_threshold {
                Some(t) => max >= t,
                None => max > 0,
            };
            if due && armed {
                let m = self.mitigate_one()?;
                if !m.is_empty() {
                    actions.push(MitigationAction::ProactiveRefresh(m.refreshed.to_vec()));
                    done.push(m);
                }
            }
        }
        Ok((actions, done, updates))
    }

    /// Service one RFM. PVAC refreshes up to four victims; aggressor schemes
    /// mitigate one aggressor. Chronus only touches rows at or above N_BO.
    pub fn on_rfm(&mut self) -> Result<Mitigation> {
        let m = if self.cfg.scheme == Scheme::Chronus {
            match self.over.iter().copied().max_by_key(|&r| (self.bank.get(r), std::cmp::Reverse(r))) {
                Some(r) => self.mitigate_aggressor(r)?,
                None => Mitigation::default(),
            }
        } else {
            self.mitigate_one()?
        };
        if m.is_empty() {
            self.empty_rfms += 1;
        }
        Ok(m)
    }

    // One mitigation unit from the queue head.
    fn mitigate_one(&mut self) -> Result<Mitigation> {
        match self.cfg.scheme {
            Scheme::Baseline => Ok(Mitigation::default()),
            Scheme::Pvac => {
                let mut m = Mitigation::default();
                for _ in 0..4 {
                    let Some((v, _)) = self.queue.pop() else { break };
                    let up = self.activate(v, Semantics::VictimCount)?;
                    m.refreshed.push(v);
                    m.updates.extend(up);
                }
                Ok(m)
            }
            _ => match self.queue.peek() {
                Some((r, _)) => self.mitigate_aggressor(r),
                None => Ok(Mitigation::default()),
            },
        }
    }

    // Activate the aggressor's victims nearest-first, then clear its counter.
    fn mitigate_aggressor(&mut self, r: u32) -> Result<Mitigation> {
        let mut m = Mitigation { aggressor: Some(r), ..Mitigation::default() };
        let mut vs = victim_set(r, &self.bank.geometry);
        vs.sort_by_key(|&v| (v.abs_diff(r), v));
        let sem = self.cfg.mitigation_semantics();
        for v in vs {
            let up = self.activate(v, sem)?;
            m.refreshed.push(v);
            m.updates.extend(up);
        }
        self.bank.set(r, 0);
        self.track(&[(r, 0)]);
        m.updates.push((r, 0));
        Ok(m)
    }

    /// Whether some tracked counter is at or above N_BO.
    pub fn wants_alert(&self) -> bool {
        match self.cfg.scheme {
            Scheme::Baseline => false,
            Scheme::Chronus => !self.over.is_empty(),
            _ => u32::from(self.queue.max_count()) >= self.cfg.n_bo,
        }
    }

    /// Rows Chronus still has to mitigate (0 for other schemes).
    pub fn pending_over_threshold(&self) -> usize {
        self.over.len()
    }
}
