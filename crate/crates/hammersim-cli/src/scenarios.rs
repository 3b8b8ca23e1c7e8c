//! One function per subcommand. Each writes its CSV/JSON outputs into the
//! output directory and reports invariant violations instead of failing, so
//! every artifact is still written when a check trips.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use hammersim_core::attack::{self, FeintingOutcome, FeintingSpec, RoundRobinSpec};
use hammersim_core::counters::{counter_update_breakdown, CsaTiming, CSA_SCALING_PER_DOUBLING};
use hammersim_core::dram::DeviceGeometry;
use hammersim_core::energy::{energy_report, window_summary, write_window_csv, EnergyModel};
use hammersim_core::engine::{audit, saturation_act_stream, Engine, EngineMetrics, EngineSetup, LogKind, TraceEvent};
use hammersim_core::par;
use hammersim_core::schemes::{Scheme, SchemeConfig};
use hammersim_core::security::{
    brute_force_oracle, bw_bound, discipline_of, oracle_r1s, scheme_t_rc, security_table, solve_nbo,
    AnalysisParams, OracleReport,
};
use hammersim_core::Ps;

use crate::config::{bad, ns, FileConfig, TraceSection};

/// Inputs shared by every subcommand.
pub struct Ctx<'a> {
    /// Parsed config.
    pub cfg: &'a FileConfig,
    /// Directory holding the config (relative trace paths resolve here).
    pub base: PathBuf,
    /// Output directory.
    pub out: PathBuf,
    /// RNG seed.
    pub seed: u64,
}

/// Outputs written and invariant violations found.
#[derive(Debug, Default, Serialize)]
pub struct Report {
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    /// Invariant violations (non-empty means exit code 3).
    pub violations: Vec<String>,
    /// One-line human summary per result.
    #[serde(skip)]
    pub summary: Vec<String>,
}

impl Ctx<'_> {
    fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.out.join(rel);
        if let Some(d) = p.parent() {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(p)
    }

    fn create(&self, rel: &str, rep: &mut Report) -> Result<BufWriter<File>> {
        let p = self.path(rel)?;
        rep.outputs.push(rel.to_string());
        Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
    }

    fn write_csv<T: Serialize>(&self, rel: &str, rows: &[T], rep: &mut Report) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.create(rel, rep)?);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, rel: &str, v: &T, rep: &mut Report) -> Result<()> {
        let mut w = self.create(rel, rep)?;
        serde_json::to_writer_pretty(&mut w, v)?;
        Ok(())
    }

    fn write_text(&self, rel: &str, text: &str, rep: &mut Report) -> Result<()> {
        let p = self.path(rel)?;
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        rep.outputs.push(rel.to_string());
        Ok(())
    }
}

fn audit_into(rep: &mut Report, label: &str, log: &hammersim_core::engine::EventLog, setup: &EngineSetup) {
    let a = audit(log, setup);
    for v in a.violations {
        rep.violations.push(format!("{label}: timing audit: {v}"));
    }
}

// ---------------------------------------------------------------- domino

#[derive(Serialize)]
struct DominoRow {
    window_index: usize,
    bandwidth: f64,
    rfm_count: u64,
    alert_count: u64,
    counter_mean: f64,
    counter_max: u16,
}

#[derive(Serialize)]
struct DominoSummary {
    scheme: &'static str,
    n_bo: u32,
    n_mit: u32,
    windows: usize,
    first_alert_window: Option<usize>,
    min_bandwidth: f64,
    min_bandwidth_window: usize,
    alerts: u64,
    rfms: u64,
    metrics: EngineMetrics,
}

/// Refresh-only run: per-window bandwidth, RFM/Alert counts and counter
/// statistics (the refresh-driven Alert cascade).
pub fn domino(ctx: &Ctx) -> Result<Report> {
    let cfg = ctx.cfg;
    let mut rep = Report::default();
    let scheme = cfg.scheme.resolve()?;
    let refresh = cfg.refresh_config(&scheme)?;
    let duration = cfg.duration(&refresh)?;
    let layout = cfg.energy.layout_for(scheme.scheme);
    let mut setup = cfg.engine_setup(scheme, duration, layout)?;
    setup.log = true;
    let w = setup.refresh.t_refw;
    let n = duration.0.div_ceil(w.0).max(1);

    let mut e = Engine::new(setup.clone())?;
    let mut stats = Vec::with_capacity(n as usize);
    for i in 1..=n {
        e.advance_to((w * i).min(duration))?;
        let c = e.scheme().bank.counters();
        let mean = c.iter().map(|&v| f64::from(v)).sum::<f64>() / c.len() as f64;
        stats.push((mean, c.iter().copied().max().unwrap_or(0)));
    }
    let out = e.finish()?;
    let m = &out.metrics;

    // The log-derived window summary must agree with the engine's accounting.
    let ws = window_summary(&out.log, &setup);
    let bws = m.bandwidths();
    for (i, s) in ws.iter().enumerate() {
        let b = bws.get(i).copied().unwrap_or(1.0);
        if (s.bandwidth - b).abs() > 1e-9 {
            rep.violations.push(format!("window {i}: log bandwidth {} != engine bandwidth {b}", s.bandwidth));
        }
    }
    audit_into(&mut rep, "domino", &out.log, &setup);

    let rows: Vec<DominoRow> = ws
        .iter()
        .zip(&stats)
        .map(|(s, &(mean, max))| DominoRow {
            window_index: s.window_index,
            bandwidth: s.bandwidth,
            rfm_count: s.rfm_count,
            alert_count: s.alert_count,
            counter_mean: mean,
            counter_max: max,
        })
        .collect();
    ctx.write_csv("domino.csv", &rows, &mut rep)?;
    if cfg.run.log {
        out.log.write_csv(ctx.create("events.csv", &mut rep)?)?;
    }
    let (min_i, min_bw) = rows
        .iter()
        .map(|r| (r.window_index, r.bandwidth))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let summary = DominoSummary {
        scheme: setup.scheme.scheme.name(),
        n_bo: setup.scheme.n_bo,
        n_mit: setup.scheme.n_mit,
        windows: rows.len(),
        first_alert_window: m.first_alert_window(),
        min_bandwidth: min_bw,
        min_bandwidth_window: min_i,
        alerts: m.alerts_raised,
        rfms: m.rfms_issued,
        metrics: m.clone(),
    };
    rep.summary.push(format!(
        "first alert window {:?}; min bandwidth {:.5} in window {}; {} alerts, {} RFMs",
        summary.first_alert_window, min_bw, min_i, summary.alerts, summary.rfms
    ));
    ctx.write_json("summary.json", &summary, &mut rep)?;
    ctx.write_text("domino.gp", DOMINO_GP, &mut rep)?;
    Ok(rep)
}

const DOMINO_GP: &str = r#"set datafile separator ','
set key autotitle columnhead
set xlabel 'refresh window'
set ylabel 'available bandwidth'
set y2label 'RFMs'
set y2tics
set terminal pngcairo size 900,500
set output 'domino.png'
plot 'domino.csv' using 1:2 with linespoints title 'bandwidth', \
     '' using 1:3 axes x1y2 with impulses title 'RFMs'
"#;

// ---------------------------------------------------------------- security-table

#[derive(Serialize)]
struct SecurityRow {
    scheme: &'static str,
    n_mit: u32,
    max_hc: u32,
    n_bo: Option<u32>,
    worst_r1: Option<u32>,
    nr: Option<u32>,
    feasible: bool,
}

/// Largest safe N_BO per scheme, n_mit and target HC.
pub fn security(ctx: &Ctx) -> Result<Report> {
    let s = &ctx.cfg.security;
    let mut rep = Report::default();
    let base = s.params()?;
    let pts = security_table(&s.schemes, &s.n_mit, &s.max_hc, &base)?;
    let rows: Vec<SecurityRow> = pts
        .iter()
        .map(|p| SecurityRow {
            scheme: p.scheme.name(),
            n_mit: p.n_mit,
            max_hc: p.max_hc,
            n_bo: p.n_bo,
            worst_r1: p.worst_r1,
            nr: p.nr,
            feasible: p.feasible(),
        })
        .collect();
    for r in &rows {
        let nbo = r.n_bo.map_or("infeasible".to_string(), |v| v.to_string());
        rep.summary.push(format!("{}-{} HC {}: N_BO {nbo}", r.scheme, r.n_mit, r.max_hc));
    }
    ctx.write_csv("security_table.csv", &rows, &mut rep)?;
    ctx.write_text("security_table.gp", SECURITY_GP, &mut rep)?;
    Ok(rep)
}

const SECURITY_GP: &str = r#"set datafile separator ','
set logscale x 2
set xlabel 'max HC'
set ylabel 'N_BO'
set terminal pngcairo size 900,500
set output 'security_table.png'
plot for [s in 'PVAC PRAC Chronus'] for [m in '1 2 4'] \
     'security_table.csv' using (strcol(1) eq s && $2 == m ? $3 : NaN):4 \
     with linespoints title s.'-'.m
"#;

// ---------------------------------------------------------------- bw-bound

#[derive(Serialize)]
struct BwRow {
    scheme: &'static str,
    n_mit: u32,
    n_bo: u32,
    t_rc_ns: f64,
    bw_fraction: f64,
}

#[derive(Serialize)]
struct EngineCheckRow {
    scheme: &'static str,
    n_mit: u32,
    n_bo: u32,
    proactive: bool,
    bound: f64,
    observed: f64,
    rel_err: f64,
    alerts: u64,
    rfms: u64,
}

/// Closed-form bandwidth bound per point, plus an optional saturating
/// single-row engine run for comparison.
pub fn bw(ctx: &Ctx) -> Result<Report> {
    let cfg = ctx.cfg;
    let mut rep = Report::default();
    let mut rows = Vec::new();
    for p in &cfg.bw_bound.points {
        SchemeConfig::preset(p.scheme, p.n_bo, p.n_mit).validate()?;
        let t_rc = match p.t_rc_ns {
            Some(v) => ns(v, "bw_bound.points.t_rc_ns")?,
            None => scheme_t_rc(p.scheme),
        };
        if t_rc == Ps::ZERO {
            return Err(bad("bw_bound: tRC must be positive"));
        }
        let f = bw_bound(p.n_mit, p.n_bo, t_rc);
        rep.summary.push(format!("{}-{} N_BO {}: {:.4}", p.scheme.name(), p.n_mit, p.n_bo, f));
        rows.push(BwRow { scheme: p.scheme.name(), n_mit: p.n_mit, n_bo: p.n_bo, t_rc_ns: t_rc.as_ns(), bw_fraction: f });
    }
    ctx.write_csv("bw_bound.csv", &rows, &mut rep)?;

    if let Some(ec) = &cfg.bw_bound.engine_check {
        let mut sc = SchemeConfig::preset(ec.scheme, ec.n_bo, ec.n_mit);
        if !ec.proactive {
            sc.proactive_threshold = None;
            sc.proactive_period = None;
        }
        sc.validate()?;
        let refresh = cfg.refresh_config(&sc)?;
        let duration = refresh.t_refw * u64::from(ec.windows.max(1));
        let setup = cfg.engine_setup(sc, duration, cfg.energy.layout_for(ec.scheme))?;
        if ec.row >= setup.geometry.rows_per_bank {
            return Err(bad(format!("bw_bound.engine_check.row {} outside the bank", ec.row)));
        }
        let mut s = setup.clone();
        s.log = true;
        let out = hammersim_core::engine::run(s.clone(), saturation_act_stream(0, vec![ec.row]))?;
        audit_into(&mut rep, "bw engine check", &out.log, &s);
        let bound = bw_bound(ec.n_mit, ec.n_bo, scheme_t_rc(ec.scheme));
        let observed = out.metrics.mitigation_blocked_fraction();
        let row = EngineCheckRow {
            scheme: ec.scheme.name(),
            n_mit: ec.n_mit,
            n_bo: ec.n_bo,
            proactive: ec.proactive,
            bound,
            observed,
            rel_err: (observed - bound).abs() / bound,
            alerts: out.metrics.alerts_raised,
            rfms: out.metrics.rfms_issued,
        };
        rep.summary.push(format!(
            "engine check {}-{} N_BO {}: observed {:.4} vs bound {:.4} ({:.2}% off)",
            row.scheme,
            row.n_mit,
            row.n_bo,
            observed,
            bound,
            100.0 * row.rel_err
        ));
        ctx.write_csv("engine_check.csv", &[row], &mut rep)?;
    }
    Ok(rep)
}

// ---------------------------------------------------------------- csa-latency

#[derive(Serialize)]
struct CsaRow {
    rows: u32,
    br: u32,
    t_rcd_ns: f64,
    update_ns: f64,
    t_wr_ns: f64,
    t_rp_ns: f64,
    total_ns: f64,
    csa_share: f64,
}

/// Counter-update latency breakdown over bank sizes and blast radii.
pub fn csa_latency(ctx: &Ctx) -> Result<Report> {
    let c = &ctx.cfg.csa;
    let mut rep = Report::default();
    if !(c.scaling_factor.is_finite() && c.scaling_factor > 0.0) {
        return Err(bad("csa.scaling_factor must be positive"));
    }
    let mut rows = Vec::new();
    for &r in &c.rows {
        if r == 0 {
            return Err(bad("csa.rows values must be positive"));
        }
        let mut t = CsaTiming::scaled(r, c.scaling_factor);
        if let Some(u) = c.t_up_ns {
            t.t_up = ns(u, "csa.t_up_ns")?;
        }
        for &br in &c.br {
            let b = counter_update_breakdown(&t, br);
            rep.summary.push(format!(
                "{r} rows BR {br}: {:.2} ns, CSA share {:.2}%",
                b.total().as_ns(),
                100.0 * b.csa_share()
            ));
            rows.push(CsaRow {
                rows: r,
                br,
                t_rcd_ns: b.t_rcd.as_ns(),
                update_ns: b.update.as_ns(),
                t_wr_ns: b.t_wr.as_ns(),
                t_rp_ns: b.t_rp.as_ns(),
                total_ns: b.total().as_ns(),
                csa_share: b.csa_share(),
            });
        }
    }
    ctx.write_csv("csa_latency.csv", &rows, &mut rep)?;
    Ok(rep)
}

// ---------------------------------------------------------------- simulate

#[derive(Serialize)]
struct BankResult {
    bank: u32,
    metrics: EngineMetrics,
    energy_total: f64,
    baseline_energy_total: f64,
    normalized_energy: f64,
    feinting: Option<FeintingOutcome>,
    #[serde(skip)]
    violations: Vec<String>,
}

fn build_trace(ctx: &Ctx, geometry: &DeviceGeometry, bank: u32) -> Result<Option<Vec<TraceEvent>>> {
    let rebank = |v: Vec<TraceEvent>| v.into_iter().map(|e| TraceEvent { bank, ..e }).collect();
    Ok(match &ctx.cfg.trace {
        TraceSection::Idle | TraceSection::Feinting { .. } => None,
        TraceSection::RoundRobin { .. } => None,
        TraceSection::Benign { count, mean_gap_ns } => {
            let gap = ns(*mean_gap_ns, "trace.mean_gap_ns")?;
            Some(rebank(attack::gen_benign(ctx.seed.wrapping_add(u64::from(bank)), geometry, gap, *count)))
        }
        TraceSection::File { path } => {
            let p = if path.is_absolute() { path.clone() } else { ctx.base.join(path) };
            let f = File::open(&p).map_err(|e| bad(format!("trace file {}: {e}", p.display())))?;
            let all = attack::parse_trace(BufReader::new(f))?;
            Some(all.into_iter().filter(|e| e.bank == bank).collect())
        }
    })
}

fn simulate_bank(ctx: &Ctx, bank: u32, scheme: &SchemeConfig, duration: Ps) -> Result<BankResult> {
    let cfg = ctx.cfg;
    let layout = cfg.energy.layout_for(scheme.scheme);
    let mut setup = cfg.engine_setup(scheme.clone(), duration, layout)?;
    setup.bank = bank;
    setup.log = true;
    let feinting = matches!(cfg.trace, TraceSection::Feinting { .. });
    setup.track_disturbance = feinting;
    let g = setup.geometry;
    let mut e = Engine::new(setup.clone())?;
    let mut outcome = None;
    match &cfg.trace {
        TraceSection::RoundRobin { n, stride, base_row } => {
            let spec = RoundRobinSpec { n: *n, stride: *stride, base_row: *base_row };
            e.run_trace(attack::gen_round_robin(&spec, &g)?.map(|t| TraceEvent { bank, ..t }))?;
        }
        TraceSection::Feinting { r1 } => {
            let spec = FeintingSpec {
                discipline: discipline_of(scheme.scheme),
                r1: *r1,
                n_bo: scheme.n_bo,
                n_mit: scheme.n_mit,
                abo_act: setup.abo.abo_act,
                abo_delay: setup.abo.abo_delay,
            };
            outcome = Some(attack::run_feinting(&mut e, &spec)?);
        }
        _ => {
            if let Some(t) = build_trace(ctx, &g, bank)? {
                e.run_trace(t)?;
            }
        }
    }
    let out = e.finish()?;
    let mut rep = Report::default();
    audit_into(&mut rep, &format!("bank {bank}"), &out.log, &setup);

    let dir = format!("bank{bank}");
    let mut files = Report::default();
    write_window_csv(ctx.create(&format!("{dir}/windows.csv"), &mut files)?, &window_summary(&out.log, &setup))?;
    if cfg.run.log {
        out.log.write_csv(ctx.create(&format!("{dir}/events.csv"), &mut files)?)?;
    }
    let model = EnergyModel::calibrated(CsaTiming::scaled(g.rows_per_bank, CSA_SCALING_PER_DOUBLING), g.blast_radius);
    let energy = energy_report(&out.log, &setup.scheme, &layout, &g, &model)?;
    energy.write_csv(ctx.create(&format!("{dir}/energy.csv"), &mut files)?)?;

    // Baseline: the same ACTs at the same times, no mitigation.
    let base_cfg = SchemeConfig::preset(Scheme::Baseline, 1, 1);
    let mut base_setup = cfg.engine_setup(base_cfg, duration, hammersim_core::counters::CsaLayout::in_dsa())?;
    base_setup.bank = bank;
    base_setup.log = true;
    let acts = out
        .log
        .events
        .iter()
        .filter(|ev| ev.kind == LogKind::Act)
        .filter_map(|ev| ev.row.map(|r| TraceEvent::act_at(ev.time, bank, r)));
    let base_out = hammersim_core::engine::run(base_setup.clone(), acts)?;
    let base_energy = energy_report(&base_out.log, &base_setup.scheme, &base_setup.layout, &g, &model)?;

    Ok(BankResult {
        bank,
        energy_total: energy.total,
        baseline_energy_total: base_energy.total,
        normalized_energy: energy.normalized_to(&base_energy),
        metrics: out.metrics,
        feinting: outcome,
        violations: rep.violations,
    })
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    scheme: &'static str,
    n_bo: u32,
    n_mit: u32,
    banks: &'a [BankResult],
}

/// Run the configured trace on `run.banks` independent banks.
pub fn simulate(ctx: &Ctx) -> Result<Report> {
    let cfg = ctx.cfg;
    let mut rep = Report::default();
    if cfg.run.banks == 0 || cfg.run.banks > cfg.geometry.banks {
        return Err(bad(format!("run.banks must be in 1..={}", cfg.geometry.banks)));
    }
    let scheme = cfg.scheme.resolve()?;
    let refresh = cfg.refresh_config(&scheme)?;
    let duration = cfg.duration(&refresh)?;
    let banks: Vec<u32> = (0..cfg.run.banks).collect();
    let results = par::map(&banks, |&b| simulate_bank(ctx, b, &scheme, duration));
    let mut ok = Vec::new();
    for r in results {
        ok.push(r?);
    }
    for b in &ok {
        let m = &b.metrics;
        rep.outputs.push(format!("bank{}/windows.csv", b.bank));
        if cfg.run.log {
            rep.outputs.push(format!("bank{}/events.csv", b.bank));
        }
        rep.outputs.push(format!("bank{}/energy.csv", b.bank));
        rep.violations.extend(b.violations.iter().cloned());
        rep.summary.push(format!(
            "bank {}: {} ACTs, {} alerts, {} RFMs, max counter {}, energy x{:.4} of baseline",
            b.bank, m.acts_issued, m.alerts_raised, m.rfms_issued, m.max_counter, b.normalized_energy
        ));
    }
    let summary = SimulateSummary { scheme: scheme.scheme.name(), n_bo: scheme.n_bo, n_mit: scheme.n_mit, banks: &ok };
    ctx.write_json("metrics.json", &summary, &mut rep)?;
    Ok(rep)
}

// ---------------------------------------------------------------- sweep-stride

#[derive(Serialize)]
struct SweepRow {
    scheme: &'static str,
    max_hc: u32,
    n_bo: u32,
    n_mit: u32,
    stride: u32,
    pool: u32,
    acts: u64,
    alerts: u64,
    rfms: u64,
    max_counter: u16,
    mean_bandwidth: f64,
    mitigation_fraction: f64,
}

/// Round-robin pools over strides and sizes at the N_BO each target HC allows.
pub fn sweep(ctx: &Ctx) -> Result<Report> {
    let cfg = ctx.cfg;
    let s = &cfg.sweep;
    let mut rep = Report::default();
    if s.strides.contains(&0) || s.pools.contains(&0) {
        return Err(bad("sweep: strides and pools must be positive"));
    }
    let mut jobs = Vec::new();
    for &scheme in &s.schemes {
        let n_mit = if matches!(scheme, Scheme::Chronus | Scheme::Moat) { 1 } else { s.n_mit };
        for &hc in &s.max_hc {
            let p = AnalysisParams::new(n_mit);
            let pt = solve_nbo(scheme, hc, &p)?;
            let Some(n_bo) = pt.n_bo else {
                rep.summary.push(format!("{}-{n_mit} HC {hc}: infeasible, skipped", scheme.name()));
                continue;
            };
            for &stride in &s.strides {
                for &pool in &s.pools {
                    let last = u64::from(s.base_row) + u64::from(pool - 1) * u64::from(stride);
                    if last < u64::from(cfg.geometry.rows_per_bank) {
                        jobs.push((scheme, hc, n_bo, n_mit, stride, pool));
                    }
                }
            }
        }
    }
    let results = par::map(&jobs, |&(scheme, max_hc, n_bo, n_mit, stride, pool)| -> Result<SweepRow> {
        let sc = cfg.scheme.resolve_for(scheme, n_bo, n_mit)?;
        let refresh = cfg.refresh_config(&sc)?;
        let duration = refresh.t_refw * u64::from(s.windows.max(1));
        let mut setup = cfg.engine_setup(sc, duration, cfg.energy.layout_for(scheme))?;
        setup.log = false;
        let spec = RoundRobinSpec { n: pool, stride, base_row: s.base_row };
        let out = hammersim_core::engine::run(setup.clone(), attack::gen_round_robin(&spec, &setup.geometry)?)?;
        let m = &out.metrics;
        let bws = m.bandwidths();
        Ok(SweepRow {
            scheme: scheme.name(),
            max_hc,
            n_bo,
            n_mit,
            stride,
            pool,
            acts: m.acts_issued,
            alerts: m.alerts_raised,
            rfms: m.rfms_issued,
            max_counter: m.max_counter,
            mean_bandwidth: bws.iter().sum::<f64>() / bws.len().max(1) as f64,
            mitigation_fraction: m.mitigation_blocked_fraction(),
        })
    });
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r?);
    }
    rep.summary.push(format!("{} runs", rows.len()));
    ctx.write_csv("sweep.csv", &rows, &mut rep)?;
    ctx.write_text("sweep.gp", SWEEP_GP, &mut rep)?;
    Ok(rep)
}

const SWEEP_GP: &str = r#"set datafile separator ','
set logscale x 2
set xlabel 'pool size'
set ylabel 'fraction of time in RFMs'
set terminal pngcairo size 900,500
set output 'sweep.png'
plot for [st=1:5] 'sweep.csv' using ($5 == st ? $6 : NaN):12 with linespoints title 'stride '.st
"#;

// ---------------------------------------------------------------- oracle-check

#[derive(Serialize)]
struct OracleRow {
    scheme: &'static str,
    n_bo: u32,
    n_mit: u32,
    rows: u32,
    observed_hc: u32,
    observed_r1: u32,
    bound_hc: u64,
    runs: usize,
    audit_ok: bool,
    sound: bool,
}

impl From<&OracleReport> for OracleRow {
    fn from(r: &OracleReport) -> Self {
        Self {
            scheme: r.scheme.name(),
            n_bo: r.n_bo,
            n_mit: r.n_mit,
            rows: r.rows,
            observed_hc: r.observed_hc,
            observed_r1: r.observed_r1,
            bound_hc: r.bound_hc,
            runs: r.runs,
            audit_ok: r.audit_ok,
            sound: r.sound(),
        }
    }
}

/// Replay the feinting attack on a small bank and compare the largest true
/// hammered count with the analyzer's bound.
pub fn oracle(ctx: &Ctx) -> Result<Report> {
    let o = &ctx.cfg.oracle;
    let mut rep = Report::default();
    if o.rows == 0 || o.rows > 4096 {
        return Err(bad("oracle.rows must be in 1..=4096"));
    }
    let geometry = DeviceGeometry { blast_radius: ctx.cfg.geometry.blast_radius, ..DeviceGeometry::small(o.rows) };
    geometry.validate()?;
    let mut jobs = Vec::new();
    for &s in &o.schemes {
        let mits: Vec<u32> = match s {
            Scheme::Chronus | Scheme::Moat => vec![1],
            _ => o.n_mit.clone(),
        };
        for &m in &mits {
            for &n in &o.n_bo {
                let sc = SchemeConfig::preset(s, n, m);
                sc.validate()?;
                jobs.push(sc);
            }
        }
    }
    let results = par::map(&jobs, |sc| -> Result<OracleReport> {
        let r1s = match &o.r1 {
            Some(v) => v.clone(),
            None => oracle_r1s(discipline_of(sc.scheme), &geometry),
        };
        Ok(brute_force_oracle(sc, geometry, &r1s)?)
    });
    let mut rows = Vec::new();
    for r in results {
        let r = r?;
        let row = OracleRow::from(&r);
        if !row.sound {
            rep.violations.push(format!(
                "{}-{} N_BO {}: observed HC {} (r1 {}) exceeds bound {}",
                row.scheme, row.n_mit, row.n_bo, row.observed_hc, row.observed_r1, row.bound_hc
            ));
        }
        if !row.audit_ok {
            rep.violations.push(format!("{}-{} N_BO {}: timing audit failed", row.scheme, row.n_mit, row.n_bo));
        }
        rows.push(row);
    }
    let sound = rows.iter().filter(|r| r.sound).count();
    rep.summary.push(format!("{sound}/{} configurations within the analyzer bound", rows.len()));
    ctx.write_csv("oracle.csv", &rows, &mut rep)?;
    Ok(rep)
}

/// Directory of `config` (for relative paths inside it).
pub fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}
