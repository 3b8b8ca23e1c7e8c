//! Single-bank event-driven simulator.
//!
//! The engine advances a picosecond timeline. ACTs come from a trace (or a
//! closed-loop driver calling [`Engine::act`]); REFs are issued on a
//! window-aligned schedule (REF `k` of window `w` is due at
//! `w*tREFW + k*tREFI`); the memory-controller side of the Alert Back-Off
//! protocol is run whenever the scheme reports a counter at N_BO.
//!
//! Ordering rules:
//! - an Alert is asserted once the triggering row cycle completes (ACT issue
//!   + tRC), or at the end of the REF/RFM that pushed a counter over;
//! - up to `abo_act` ACTs may issue after assertion provided each row cycle
//!   ends within tABO_ACT; the first RFM starts exactly tABO_ACT after
//!   assertion;
//! - a REF that falls due during an RFM burst is slotted between RFMs (never
//!   before the first one);
//! - proactive mitigation happens inside the REF's tRFC and costs no time.

mod audit;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use audit::{audit, AuditReport};

use crate::counters::{victim_set, CsaLayout};
use crate::dram::{refresh_slot_rows, DeviceGeometry, RefreshConfig, TimingSet};
use crate::error::{config_err, Error, Result};
use crate::schemes::{MitigationAction, Scheme, SchemeConfig, SchemeState};
use crate::Ps;

/// Which activations satisfy ABO_Delay after an RFM burst.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AboDelayCounting {
    /// Every row activation from the start of the burst: ACTs, REF-refreshed
    /// rows and RFM-induced victim activations.
    #[default]
    AllActivations,
    /// Only ACT commands issued after the last RFM completes.
    CommandActsOnly,
}

/// Alert Back-Off protocol parameters.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AboConfig {
    /// Window after Alert during which ACTs may still issue.
    pub t_abo_act: Ps,
    /// Blocking time of one RFM.
    pub t_rfm: Ps,
    /// ACTs permitted inside tABO_ACT.
    pub abo_act: u32,
    /// Activations required after RFMs before the next Alert.
    pub abo_delay: u32,
    /// What counts toward `abo_delay`.
    #[serde(default)]
    pub delay_counting: AboDelayCounting,
}

impl AboConfig {
    /// Standard values with `abo_delay = n_mit`.
    pub fn for_scheme(cfg: &SchemeConfig) -> Self {
        Self {
            t_abo_act: Ps::ns(180),
            t_rfm: Ps::ns(350),
            abo_act: 3,
            abo_delay: cfg.n_mit,
            delay_counting: AboDelayCounting::AllActivations,
        }
    }

    /// Check positivity and the `abo_delay = n_mit` rule.
    pub fn validate(&self, cfg: &SchemeConfig) -> Result<()> {
        if self.t_abo_act.0 == 0 || self.t_rfm.0 == 0 {
            return config_err("ABO durations must be positive");
        }
        if matches!(cfg.scheme, Scheme::Prac | Scheme::Pvac | Scheme::Qprac)
            && self.abo_delay != cfg.n_mit
        {
            return config_err(format!(
                "{}: abo_delay ({}) must equal n_mit ({})",
                cfg.scheme.name(),
                self.abo_delay,
                cfg.n_mit
            ));
        }
        Ok(())
    }
}

/// What a trace event asks for.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum EventKind {
    /// Activate a row.
    Act(u32),
    /// Issue nothing for a while.
    Idle(Ps),
    /// Stop consuming the trace.
    EndOfTrace,
}

/// One memory-controller-visible event.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    /// Requested time; `None` means as soon as possible.
    pub time: Option<Ps>,
    /// Target bank.
    pub bank: u32,
    /// Event payload.
    pub kind: EventKind,
}

impl TraceEvent {
    /// ASAP ACT.
    pub fn act(bank: u32, row: u32) -> Self {
        Self { time: None, bank, kind: EventKind::Act(row) }
    }

    /// Timed ACT.
    pub fn act_at(time: Ps, bank: u32, row: u32) -> Self {
        Self { time: Some(time), bank, kind: EventKind::Act(row) }
    }

    /// Idle gap.
    pub fn idle(bank: u32, d: Ps) -> Self {
        Self { time: None, bank, kind: EventKind::Idle(d) }
    }
}

/// Event-log record type.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LogKind {
    /// Normal activation.
    #[serde(rename = "ACT")]
    Act,
    /// Refresh command.
    #[serde(rename = "REF")]
    Ref,
    /// Refresh-management command.
    #[serde(rename = "RFM")]
    Rfm,
    /// Alert asserted.
    #[serde(rename = "ALERT")]
    Alert,
    /// Proactive refresh inside tRFC.
    #[serde(rename = "PROACT")]
    Proact,
}

impl LogKind {
    /// CSV spelling.
    pub fn as_str(self) -> &'static str {
        match self {
            LogKind::Act => "ACT",
            LogKind::Ref => "REF",
            LogKind::Rfm => "RFM",
            LogKind::Alert => "ALERT",
            LogKind::Proact => "PROACT",
        }
    }
}

/// One event-log record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogEvent {
    /// Command start time.
    pub time: Ps,
    /// Record type.
    pub kind: LogKind,
    /// Row (ACT row, first refreshed row, mitigated aggressor, ...).
    pub row: Option<u32>,
    /// Counter of `row` after the event, where meaningful.
    pub counter_after: Option<u16>,
    /// Rows refreshed by REF/RFM/PROACT.
    pub rows: Vec<u32>,
}

/// Ordered command log of one bank.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventLog {
    /// Bank index.
    pub bank: u32,
    /// Records in issue order.
    pub events: Vec<LogEvent>,
}

impl EventLog {
    /// Write `time_ns,bank,event,row,counter_after`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let io = |e: csv::Error| Error::Invariant(format!("csv write failed: {e}"));
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["time_ns", "bank", "event", "row", "counter_after"]).map_err(io)?;
        for e in &self.events {
            wr.write_record([
                format!("{:.3}", e.time.as_ns()),
                self.bank.to_string(),
                e.kind.as_str().to_string(),
                e.row.map(|r| r.to_string()).unwrap_or_default(),
                e.counter_after.map(|c| c.to_string()).unwrap_or_default(),
            ])
            .map_err(io)?;
        }
        wr.flush().map_err(|e| Error::Invariant(format!("csv flush failed: {e}")))?;
        Ok(())
    }

    /// Count of records of `kind`.
    pub fn count(&self, kind: LogKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

/// Per-refresh-window statistics.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct WindowStats {
    /// Time the bank could not accept ACTs (REF + RFM blocks).
    pub blocked: Ps,
    /// Time blocked by RFMs alone.
    pub rfm_blocked: Ps,
    /// RFM commands started in the window.
    pub rfms: u64,
    /// Alerts asserted in the window.
    pub alerts: u64,
    /// ACTs issued in the window.
    pub acts: u64,
}

/// Run metrics.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EngineMetrics {
    /// ACTs admitted.
    pub acts_issued: u64,
    /// REFs issued.
    pub refs_issued: u64,
    /// RFMs issued.
    pub rfms_issued: u64,
    /// Alerts asserted.
    pub alerts_raised: u64,
    /// Proactive mitigations performed.
    pub proactive_mitigations: u64,
    /// Total REF + RFM blocking.
    pub act_blocked_time: Ps,
    /// REF blocking.
    pub ref_blocked_time: Ps,
    /// RFM blocking.
    pub rfm_blocked_time: Ps,
    /// Simulated span.
    pub duration: Ps,
    /// Window length (tREFW).
    pub window: Ps,
    /// Per-window statistics.
    pub windows: Vec<WindowStats>,
    /// Largest counter value ever written.
    pub max_counter: u16,
    /// Largest hammered count any row accumulated between its own activations
    /// (0 unless disturbance tracking is on).
    pub max_disturbance: u32,
    /// Counter saturation events.
    pub saturations: u64,
    /// RFMs that found nothing to mitigate.
    pub empty_rfms: u64,
}

impl EngineMetrics {
    /// Effective bandwidth of window `w`: `1 - blocked / window length`.
    pub fn bandwidth(&self, w: usize) -> f64 {
        let len = self.window_len(w);
        if len.0 == 0 {
            return 1.0;
        }
        1.0 - self.windows[w].blocked.0 as f64 / len.0 as f64
    }

    fn window_len(&self, w: usize) -> Ps {
        let start = self.window * w as u64;
        self.window.min(self.duration.saturating_sub(start))
    }

    /// Effective bandwidth of every window.
    pub fn bandwidths(&self) -> Vec<f64> {
        (0..self.windows.len()).map(|w| self.bandwidth(w)).collect()
    }

    /// Index of the first window with an Alert.
    pub fn first_alert_window(&self) -> Option<usize> {
        self.windows.iter().position(|w| w.alerts > 0)
    }

    /// RFM blocking as a fraction of the time not blocked by REF.
    pub fn mitigation_blocked_fraction(&self) -> f64 {
        let avail = self.duration.saturating_sub(self.ref_blocked_time);
        if avail.0 == 0 {
            0.0
        } else {
            self.rfm_blocked_time.0 as f64 / avail.0 as f64
        }
    }
}

/// Everything needed to build an engine.
#[derive(Clone, Debug, PartialEq)]
pub struct EngineSetup {
    /// Scheme parameters.
    pub scheme: SchemeConfig,
    /// Bank geometry.
    pub geometry: DeviceGeometry,
    /// Refresh parameters; tRFC is taken from the scheme.
    pub refresh: RefreshConfig,
    /// ABO parameters.
    pub abo: AboConfig,
    /// Counter storage (accounting only).
    pub layout: CsaLayout,
    /// Simulated span.
    pub duration: Ps,
    /// Keep a full command log.
    pub log: bool,
    /// Track true per-row hammered counts.
    pub track_disturbance: bool,
    /// Bank index written to the log.
    pub bank: u32,
}

impl EngineSetup {
    /// Defaults for `scheme` over `duration` with logging on.
    pub fn new(scheme: SchemeConfig, duration: Ps) -> Self {
        let abo = AboConfig::for_scheme(&scheme);
        let layout = if scheme.scheme == Scheme::Pvac {
            CsaLayout::optimized_dual()
        } else {
            CsaLayout::in_dsa()
        };
        Self {
            scheme,
            geometry: DeviceGeometry::default(),
            refresh: RefreshConfig::default(),
            abo,
            layout,
            duration,
            log: true,
            track_disturbance: false,
            bank: 0,
        }
    }

    /// Builder: geometry.
    pub fn with_geometry(mut self, g: DeviceGeometry) -> Self {
        self.geometry = g;
        self
    }

    /// Builder: refresh config.
    pub fn with_refresh(mut self, r: RefreshConfig) -> Self {
        self.refresh = r;
        self
    }

    /// Builder: disturbance tracking.
    pub fn tracking(mut self, on: bool) -> Self {
        self.track_disturbance = on;
        self
    }

    /// Builder: logging.
    pub fn logging(mut self, on: bool) -> Self {
        self.log = on;
        self
    }

    /// Validate every part and cross-part consistency.
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.scheme.validate()?;
        self.abo.validate(&self.scheme)?;
        let mut r = self.refresh;
        r.t_rfc = self.scheme.t_rfc;
        r.validate()?;
        TimingSet::builtin(self.scheme.timing).validate()?;
        crate::counters::validate_layout(&self.layout, &self.geometry)?;
        Ok(())
    }
}

#[derive(Copy, Clone, Debug)]
struct AlertState {
    at: Ps,
    acts: u32,
}

enum Background {
    Ref(Ps),
    Assert(Ps),
    Burst(Ps),
}

/// Rows touched by the defence, reported to a closed-loop attacker.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Feedback {
    /// Rows physically refreshed by REF, RFM or proactive mitigation.
    pub refreshed: Vec<u32>,
    /// Rows whose counter was reset to zero by REF, RFM or proactive mitigation.
    pub reset: Vec<u32>,
}

/// Result of a run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    /// Metrics.
    pub metrics: EngineMetrics,
    /// Command log (empty when logging is off).
    pub log: EventLog,
    /// Final counter values.
    pub final_counters: Vec<u16>,
}

/// Single-bank simulator.
#[derive(Clone, Debug)]
pub struct Engine {
    setup: EngineSetup,
    timing: TimingSet,
    refresh: RefreshConfig,
    refs_per_window: u64,
    state: SchemeState,
    cursor: Ps,
    last_act: Option<Ps>,
    busy_until: Ps,
    ref_index: u64,
    alert: Option<AlertState>,
    pending: bool,
    pending_since: Ps,
    holdoff: Option<u32>,
    armed_at: Ps,
    in_burst: bool,
    metrics: EngineMetrics,
    log: EventLog,
    dist: Vec<u32>,
    feedback: Feedback,
}

impl Engine {
    /// Build an engine; rejects inconsistent configs.
    pub fn new(setup: EngineSetup) -> Result<Self> {
        setup.validate()?;
        let mut refresh = setup.refresh;
        refresh.t_rfc = setup.scheme.t_rfc;
        let state = SchemeState::new(setup.scheme.clone(), setup.geometry, setup.layout)?;
        let windows = setup.duration.0.div_ceil(refresh.t_refw.0) as usize;
        let dist = if setup.track_disturbance {
            vec![0; setup.geometry.rows_per_bank as usize]
        } else {
            Vec::new()
        };
        Ok(Self {
            timing: TimingSet::builtin(setup.scheme.timing),
            refs_per_window: refresh.refs_per_window(),
            refresh,
            state,
            cursor: Ps::ZERO,
            last_act: None,
            busy_until: Ps::ZERO,
            ref_index: 0,
            alert: None,
            pending: false,
            pending_since: Ps::ZERO,
            holdoff: None,
            armed_at: Ps::ZERO,
            in_burst: false,
            metrics: EngineMetrics {
                duration: setup.duration,
                window: refresh.t_refw,
                windows: vec![WindowStats::default(); windows],
                ..EngineMetrics::default()
            },
            log: EventLog { bank: setup.bank, events: Vec::new() },
            dist,
            feedback: Feedback::default(),
            setup,
        })
    }

    /// Timing set in force.
    pub fn timing(&self) -> &TimingSet {
        &self.timing
    }

    /// Scheme state (counters, queue).
    pub fn scheme(&self) -> &SchemeState {
        &self.state
    }

    /// Current arrival cursor (time of the last issued ACT or idle gap end).
    pub fn now(&self) -> Ps {
        self.cursor
    }

    /// End of the simulated span.
    pub fn end(&self) -> Ps {
        self.setup.duration
    }

    /// Metrics so far.
    pub fn metrics(&self) -> &EngineMetrics {
        &self.metrics
    }

    /// True hammered count of `row` since its last activation (tracking only).
    pub fn disturbance(&self, row: u32) -> u32 {
        self.dist.get(row as usize).copied().unwrap_or(0)
    }

    /// Defence activity since the last call: the attacker's view under the
    /// perfect-knowledge threat model.
    pub fn take_feedback(&mut self) -> Feedback {
        std::mem::take(&mut self.feedback)
    }

    fn record_feedback(&mut self, refreshed: &[u32], updates: &[(u32, u16)]) {
        self.feedback.refreshed.extend_from_slice(refreshed);
        self.feedback.reset.extend(updates.iter().filter(|u| u.1 == 0).map(|u| u.0));
    }

    fn ref_due(&self, index: u64) -> Ps {
        let w = index / self.refs_per_window;
        let k = index % self.refs_per_window;
        self.refresh.t_refw * w + self.refresh.t_refi * k
    }

    fn after_last_act(&self) -> Ps {
        self.last_act.map_or(Ps::ZERO, |t| t + self.timing.t_rc)
    }

    fn next_background(&self) -> Background {
        if let Some(a) = self.alert {
            return Background::Burst(a.at + self.setup.abo.t_abo_act);
        }
        let ref_start = self
            .ref_due(self.ref_index)
            .max(self.busy_until)
            .max(self.after_last_act());
        if self.pending && self.holdoff.is_none() {
            let at = self.pending_since.max(self.busy_until).max(self.armed_at);
            if at < ref_start {
                return Background::Assert(at);
            }
        }
        Background::Ref(ref_start)
    }

    fn start_of(bg: &Background) -> Ps {
        match *bg {
            Background::Ref(t) | Background::Assert(t) | Background::Burst(t) => t,
        }
    }

    // Run background work that starts strictly before `t`.
    fn advance_before(&mut self, t: Ps) -> Result<()> {
        loop {
            let bg = self.next_background();
            let s = Self::start_of(&bg);
            if s >= t || s >= self.setup.duration {
                return Ok(());
            }
            self.do_background(bg)?;
        }
    }

    fn do_background(&mut self, bg: Background) -> Result<()> {
        match bg {
            Background::Ref(t) => self.do_ref(t),
            Background::Assert(t) => {
                self.assert_alert(t);
                Ok(())
            }
            Background::Burst(t) => self.do_burst(t),
        }
    }

    fn window_of(&self, t: Ps) -> usize {
        (t.0 / self.refresh.t_refw.0) as usize
    }

    fn add_blocked(&mut self, start: Ps, end: Ps, rfm: bool) {
        let mut a = start;
        let end = end.min(self.setup.duration);
        while a < end {
            let w = self.window_of(a);
            let wend = self.refresh.t_refw * (w as u64 + 1);
            let e = end.min(wend);
            if let Some(ws) = self.metrics.windows.get_mut(w) {
                ws.blocked += e - a;
                if rfm {
                    ws.rfm_blocked += e - a;
                }
            }
            a = e;
        }
        let span = end.saturating_sub(start);
        self.metrics.act_blocked_time += span;
        if rfm {
            self.metrics.rfm_blocked_time += span;
        } else {
            self.metrics.ref_blocked_time += span;
        }
    }

    fn window_mut(&mut self, t: Ps) -> Option<&mut WindowStats> {
        let w = self.window_of(t);
        self.metrics.windows.get_mut(w)
    }

    fn push_log(&mut self, ev: LogEvent) {
        if self.setup.log {
            self.log.events.push(ev);
        }
    }

    fn note_updates(&mut self, updates: &[(u32, u16)]) {
        for &(_, c) in updates {
            self.metrics.max_counter = self.metrics.max_counter.max(c);
        }
    }

    // A physical activation of `row` (any origin): the row is restored and its
    // neighbours disturbed.
    fn disturb(&mut self, row: u32) {
        if self.dist.is_empty() {
            return;
        }
        self.dist[row as usize] = 0;
        for v in victim_set(row, &self.setup.geometry) {
            let d = &mut self.dist[v as usize];
            *d += 1;
            self.metrics.max_disturbance = self.metrics.max_disturbance.max(*d);
        }
    }

    fn count_delay(&mut self, n: u32, is_act: bool) {
        if let Some(left) = self.holdoff {
            let counts = match self.setup.abo.delay_counting {
                AboDelayCounting::AllActivations => true,
                AboDelayCounting::CommandActsOnly => is_act && !self.in_burst,
            };
            if counts {
                let left = left.saturating_sub(n);
                self.holdoff = if left == 0 { None } else { Some(left) };
            }
        }
    }

    fn set_armed_at(&mut self, t: Ps) {
        if self.holdoff.is_none() && self.armed_at < t {
            self.armed_at = t;
        }
    }

    fn raise(&mut self, at: Ps) {
        if !self.pending {
            self.pending = true;
            self.pending_since = at;
        }
    }

    fn do_ref(&mut self, t: Ps) -> Result<()> {
        let slot = self.ref_index % self.refs_per_window;
        let rows = refresh_slot_rows(&self.setup.geometry, &self.refresh, slot);
        self.ref_index += 1;
        let end = t + self.refresh.t_rfc;
        self.busy_until = end;
        self.metrics.refs_issued += 1;
        self.add_blocked(t, end, false);
        for &r in &rows {
            self.disturb(r);
        }
        let (actions, mitigations, updates) = self.state.on_refresh(&rows)?;
        self.note_updates(&updates);
        self.record_feedback(&rows, &updates);
        self.push_log(LogEvent {
            time: t,
            kind: LogKind::Ref,
            row: rows.first().copied(),
            counter_after: None,
            rows: if self.setup.log { rows.clone() } else { Vec::new() },
        });
        let had_holdoff = self.holdoff.is_some();
        self.count_delay(rows.len() as u32, false);
        for m in &mitigations {
            self.metrics.proactive_mitigations += 1;
            self.note_updates(&m.updates);
            for &r in &m.refreshed {
                self.disturb(r);
            }
            self.record_feedback(&m.refreshed, &m.updates);
            self.count_delay(m.refreshed.len() as u32, false);
            self.push_log(LogEvent {
                time: t,
                kind: LogKind::Proact,
                row: m.aggressor.or(m.refreshed.first().copied()),
                counter_after: None,
                rows: m.refreshed.to_vec(),
            });
        }
        if had_holdoff {
            self.set_armed_at(end);
        }
        if actions.iter().any(|a| matches!(a, MitigationAction::Alert(_))) || self.state.wants_alert()
        {
            self.raise(end);
        }
        Ok(())
    }

    fn assert_alert(&mut self, t: Ps) {
        self.pending = false;
        if !self.state.wants_alert() {
            return;
        }
        self.alert = Some(AlertState { at: t, acts: 0 });
        self.metrics.alerts_raised += 1;
        if let Some(w) = self.window_mut(t) {
            w.alerts += 1;
        }
        let top = self.state.queue().peek().map(|e| e.0);
        self.push_log(LogEvent { time: t, kind: LogKind::Alert, row: top, counter_after: None, rows: Vec::new() });
    }

    fn do_burst(&mut self, start: Ps) -> Result<()> {
        self.alert = None;
        self.in_burst = true;
        self.holdoff = if self.setup.abo.abo_delay == 0 { None } else { Some(self.setup.abo.abo_delay) };
        let chronus = self.setup.scheme.scheme == Scheme::Chronus;
        let mut t = start;
        let mut issued = 0u32;
        loop {
            let more = if chronus {
                issued == 0 || self.state.pending_over_threshold() > 0
            } else {
                issued < self.setup.scheme.n_mit
            };
            if !more {
                break;
            }
            // REF slots in between RFMs, never ahead of the first one.
            if issued > 0 && self.ref_due(self.ref_index) <= t {
                self.do_ref(t)?;
                t = self.busy_until;
            }
            let m = self.state.on_rfm()?;
            let end = t + self.setup.abo.t_rfm;
            self.busy_until = end;
            self.metrics.rfms_issued += 1;
            if let Some(w) = self.window_mut(t) {
                w.rfms += 1;
            }
            self.add_blocked(t, end, true);
            self.note_updates(&m.updates);
            for &r in &m.refreshed {
                self.disturb(r);
            }
            self.record_feedback(&m.refreshed, &m.updates);
            self.count_delay(m.refreshed.len() as u32, false);
            let row = m.aggressor.or(m.refreshed.first().copied());
            let counter_after = row.map(|r| self.state.bank.get(r));
            self.push_log(LogEvent { time: t, kind: LogKind::Rfm, row, counter_after, rows: m.refreshed.to_vec() });
            issued += 1;
            t = end;
        }
        self.in_burst = false;
        self.armed_at = t;
        self.metrics.empty_rfms = self.state.empty_rfms();
        if self.state.wants_alert() {
            self.pending = true;
            self.pending_since = t;
        } else {
            self.pending = false;
        }
        Ok(())
    }

    /// Issue an ACT to `row` at `at` (or ASAP). Returns the issue time, or
    /// `None` if the ACT would fall at or beyond the end of the run.
    pub fn act(&mut self, row: u32, at: Option<Ps>) -> Result<Option<Ps>> {
        if row >= self.setup.geometry.rows_per_bank {
            return Err(Error::RowOutOfRange { row, rows: self.setup.geometry.rows_per_bank });
        }
        let arrival = at.map_or(self.cursor, |t| t.max(self.cursor));
        let t_rc = self.timing.t_rc;
        let t = loop {
            let t = arrival.max(self.busy_until).max(self.after_last_act());
            if t >= self.setup.duration {
                return Ok(None);
            }
            if let Some(a) = self.alert {
                let fits = a.acts < self.setup.abo.abo_act
                    && t + t_rc <= a.at + self.setup.abo.t_abo_act;
                if !fits {
                    let s = a.at + self.setup.abo.t_abo_act;
                    if s >= self.setup.duration {
                        return Ok(None);
                    }
                    self.do_burst(s)?;
                    continue;
                }
                break t;
            }
            let bg = self.next_background();
            if Self::start_of(&bg) <= t && Self::start_of(&bg) < self.setup.duration {
                self.do_background(bg)?;
                continue;
            }
            break t;
        };
        if let Some(a) = self.alert.as_mut() {
            a.acts += 1;
        }
        self.last_act = Some(t);
        self.cursor = t;
        self.metrics.acts_issued += 1;
        if let Some(w) = self.window_mut(t) {
            w.acts += 1;
        }
        self.disturb(row);
        let (action, updates) = self.state.on_act(row)?;
        self.note_updates(&updates);
        let counter_after = Some(self.state.bank.get(row));
        self.push_log(LogEvent { time: t, kind: LogKind::Act, row: Some(row), counter_after, rows: Vec::new() });
        let had_holdoff = self.holdoff.is_some();
        self.count_delay(1, true);
        if had_holdoff {
            self.set_armed_at(t + t_rc);
        }
        if matches!(action, MitigationAction::Alert(_)) {
            self.raise(t + t_rc);
        }
        Ok(Some(t))
    }

    /// Leave the bank idle for `d` after the current cursor.
    pub fn idle(&mut self, d: Ps) {
        self.cursor += d;
    }

    /// Feed a whole trace; stops at `EndOfTrace`, at the end of the span, or
    /// when the trace runs out.
    pub fn run_trace<I: IntoIterator<Item = TraceEvent>>(&mut self, trace: I) -> Result<()> {
        for ev in trace {
            match ev.kind {
                EventKind::Act(row) => {
                    if self.act(row, ev.time)?.is_none() {
                        break;
                    }
                }
                EventKind::Idle(d) => {
                    self.idle(d);
                    if self.cursor >= self.setup.duration {
                        break;
                    }
                }
                EventKind::EndOfTrace => break,
            }
        }
        Ok(())
    }

    /// Run background work to the end of the span and return the results.
    pub fn finish(mut self) -> Result<RunOutput> {
        let end = self.setup.duration;
        loop {
            let bg = self.next_background();
            if Self::start_of(&bg) >= end {
                break;
            }
            self.do_background(bg)?;
        }
        self.metrics.saturations = self.state.bank.saturations();
        self.metrics.empty_rfms = self.state.empty_rfms();
        Ok(RunOutput {
            metrics: self.metrics,
            log: self.log,
            final_counters: self.state.bank.counters().to_vec(),
        })
    }

    /// The setup this engine was built from.
    pub fn setup(&self) -> &EngineSetup {
        &self.setup
    }

    /// Refresh config in force (tRFC from the scheme).
    pub fn refresh(&self) -> &RefreshConfig {
        &self.refresh
    }
}

/// Convenience: build, feed `trace`, finish.
pub fn run<I: IntoIterator<Item = TraceEvent>>(setup: EngineSetup, trace: I) -> Result<RunOutput> {
    let mut e = Engine::new(setup)?;
    e.run_trace(trace)?;
    e.finish()
}

/// ASAP ACT stream cycling through `rows` forever (the engine stops it at
/// the end of the span).
pub fn saturation_act_stream(bank: u32, rows: Vec<u32>) -> impl Iterator<Item = TraceEvent> {
    assert!(!rows.is_empty(), "saturation stream needs at least one row");
    rows.into_iter().cycle().map(move |r| TraceEvent::act(bank, r))
}

// Keep `advance_before` reachable for closed-loop drivers that need to let
// background work catch up without issuing an ACT.
impl Engine {
    /// Process background work (REF, Alert, RFM) that starts before `t`.
    pub fn advance_to(&mut self, t: Ps) -> Result<()> {
        self.advance_before(t.min(self.setup.duration))?;
        self.cursor = self.cursor.max(t);
        Ok(())
    }
}
