//! Independent timing-legality check over an [`EventLog`].
//!
//! Re-derives every constraint from the configuration and the log alone; it
//! shares no state with the engine's scheduler.

use serde::Serialize;

use super::{EngineSetup, EventLog, LogKind};
use crate::dram::TimingSet;
use crate::Ps;

/// Outcome of an audit.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    /// Records examined.
    pub checked: usize,
    /// Human-readable violations (empty when the log is legal).
    pub violations: Vec<String>,
}

impl AuditReport {
    /// True when no violation was found.
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

// Keeps the report bounded on badly broken logs.
const MAX_REPORTED: usize = 50;

/// Audit `log` against the configuration it was produced with.
///
/// Checks: non-decreasing time; ACT-to-ACT spacing >= tRC; no ACT, REF or
/// RFM overlapping a REF (tRFC) or RFM block; REF/RFM start after the last
/// ACT's row cycle; REF `i` starts no earlier than its due time and no later
/// than due + tRC + tABO_ACT + tRFM; at most `abo_act` ACTs between an
/// Alert and its first RFM, which starts within tABO_ACT; at least one RFM
/// between consecutive Alerts.
pub fn audit(log: &EventLog, setup: &EngineSetup) -> AuditReport {
    let timing = TimingSet::builtin(setup.scheme.timing);
    let t_rc = timing.t_rc;
    let t_rfc = setup.scheme.t_rfc;
    let abo = setup.abo;
    let refresh = setup.refresh;
    let per_window = refresh.refs_per_window();
    let ref_slack = t_rc + abo.t_abo_act + abo.t_rfm;
    let due = |i: u64| refresh.t_refw * (i / per_window) + refresh.t_refi * (i % per_window);

    let mut rep = AuditReport::default();
    let fail = |rep: &mut AuditReport, msg: String| {
        if rep.violations.len() < MAX_REPORTED {
            rep.violations.push(msg);
        }
    };

    let mut prev_time = Ps::ZERO;
    let mut last_act: Option<Ps> = None;
    let mut block_end = Ps::ZERO;
    let mut refs = 0u64;
    // (alert time, ACTs since alert, RFM seen since alert)
    let mut alert: Option<(Ps, u32)> = None;
    let mut rfm_since_alert = true;

    for (i, e) in log.events.iter().enumerate() {
        rep.checked += 1;
        let t = e.time;
        if t < prev_time {
            fail(&mut rep, format!("#{i}: time {t} before previous record {prev_time}"));
        }
        prev_time = t;
        match e.kind {
            LogKind::Act => {
                if let Some(l) = last_act {
                    if t < l + t_rc {
                        fail(&mut rep, format!("#{i}: ACT at {t} violates tRC after ACT at {l}"));
                    }
                }
                if t < block_end {
                    fail(&mut rep, format!("#{i}: ACT at {t} inside REF/RFM block ending {block_end}"));
                }
                if let Some((ta, n)) = alert.as_mut() {
                    *n += 1;
                    if *n > abo.abo_act {
                        fail(&mut rep, format!("#{i}: ACT {n} after Alert at {ta} exceeds ABO_ACT"));
                    }
                    if t + t_rc > *ta + abo.t_abo_act {
                        fail(&mut rep, format!("#{i}: ACT at {t} row cycle exceeds tABO_ACT after Alert at {ta}"));
                    }
                }
                last_act = Some(t);
            }
            LogKind::Ref | LogKind::Rfm => {
                if t < block_end {
                    fail(&mut rep, format!("#{i}: {} at {t} overlaps block ending {block_end}", e.kind.as_str()));
                }
                if let Some(l) = last_act {
                    if t < l + t_rc {
                        fail(&mut rep, format!("#{i}: {} at {t} inside row cycle of ACT at {l}", e.kind.as_str()));
                    }
                }
                if e.kind == LogKind::Ref {
                    let d = due(refs);
                    if t < d || t > d + ref_slack {
                        fail(&mut rep, format!("#{i}: REF {refs} at {t}, due {d} (slack {ref_slack})"));
                    }
                    refs += 1;
                    block_end = t + t_rfc;
                } else {
                    if let Some((ta, _)) = alert.take() {
                        if t > ta + abo.t_abo_act {
                            fail(&mut rep, format!("#{i}: first RFM at {t} later than tABO_ACT after Alert at {ta}"));
                        }
                    }
                    rfm_since_alert = true;
                    block_end = t + abo.t_rfm;
                }
            }
            LogKind::Alert => {
                if alert.is_some() || !rfm_since_alert {
                    fail(&mut rep, format!("#{i}: Alert at {t} without an RFM since the previous Alert"));
                }
                alert = Some((t, 0));
                rfm_since_alert = false;
            }
            LogKind::Proact => {
                // Proactive work shares the REF's tRFC block.
                if t + t_rfc != block_end {
                    fail(&mut rep, format!("#{i}: PROACT at {t} not inside a REF block"));
                }
            }
        }
    }
    rep
}
