//! Scenario config file (TOML). Durations are nanoseconds at this boundary;
//! unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use hammersim_core::counters::{CsaKind, CsaLayout, Semantics, CSA_SCALING_PER_DOUBLING};
use hammersim_core::dram::{DeviceGeometry, RefreshConfig, RefreshMode, RefreshOrder, TimingLabel};
use hammersim_core::engine::{AboConfig, AboDelayCounting, EngineSetup};
use hammersim_core::schemes::{Scheme, SchemeConfig};
use hammersim_core::security::{AnalysisParams, AttackBudget, RecurrenceVariant};
use hammersim_core::{Error, Ps};

/// Whole config file. Every section is optional.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    /// Bank geometry.
    pub geometry: DeviceGeometry,
    /// Refresh parameters.
    pub refresh: RefreshSection,
    /// Mitigation scheme.
    pub scheme: SchemeSection,
    /// Alert Back-Off parameters.
    pub abo: AboSection,
    /// Run length and logging.
    pub run: RunSection,
    /// Trace for `simulate`.
    pub trace: TraceSection,
    /// Grid for `security-table`.
    pub security: SecuritySection,
    /// Points for `bw-bound`.
    pub bw_bound: BwSection,
    /// Grid for `csa-latency`.
    pub csa: CsaSection,
    /// Grid for `sweep-stride`.
    pub sweep: SweepSection,
    /// Grid for `oracle-check`.
    pub oracle: OracleSection,
    /// Energy accounting for `simulate`.
    pub energy: EnergySection,
}

/// `[refresh]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefreshSection {
    /// Refresh flavour (sets tREFI and the default tRFC).
    pub mode: RefreshMode,
    /// Override tREFW.
    pub t_refw_ns: Option<f64>,
    /// Override tREFI.
    pub t_refi_ns: Option<f64>,
    /// Row-to-slot order.
    pub order: RefreshOrder,
}

impl Default for RefreshSection {
    fn default() -> Self {
        Self { mode: RefreshMode::AllBankNormal, t_refw_ns: None, t_refi_ns: None, order: RefreshOrder::Sequential }
    }
}

/// `[scheme]`: a preset plus optional overrides.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSection {
    /// Scheme preset.
    pub name: Scheme,
    /// Alert threshold.
    pub n_bo: u32,
    /// RFMs per Alert.
    pub n_mit: u32,
    /// Set to false to disable proactive mitigation.
    pub proactive: bool,
    /// Override the proactive threshold.
    pub proactive_threshold: Option<u32>,
    /// Override the proactive period (in REFs).
    pub proactive_period: Option<u32>,
    /// Override the queue depth.
    pub queue_depth: Option<usize>,
    /// Override tRFC.
    pub t_rfc_ns: Option<f64>,
    /// Override the timing set (validated against the scheme).
    pub timing: Option<TimingLabel>,
    /// Override the counter rule (validated against the scheme).
    pub counter_semantics: Option<Semantics>,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self {
            name: Scheme::Prac,
            n_bo: 64,
            n_mit: 4,
            proactive: true,
            proactive_threshold: None,
            proactive_period: None,
            queue_depth: None,
            t_rfc_ns: None,
            timing: None,
            counter_semantics: None,
        }
    }
}

impl SchemeSection {
    /// Resolve to a validated scheme config.
    pub fn resolve(&self) -> Result<SchemeConfig> {
        self.resolve_for(self.name, self.n_bo, self.n_mit)
    }

    /// Preset for `scheme` with this section's overrides applied.
    pub fn resolve_for(&self, scheme: Scheme, n_bo: u32, n_mit: u32) -> Result<SchemeConfig> {
        let mut c = SchemeConfig::preset(scheme, n_bo, n_mit);
        if !self.proactive {
            c.proactive_threshold = None;
            c.proactive_period = None;
        }
        if let Some(t) = self.proactive_threshold {
            c.proactive_threshold = Some(t);
        }
        if let Some(p) = self.proactive_period {
            c.proactive_period = Some(p);
        }
        if let Some(q) = self.queue_depth {
            c.queue_depth = q;
        }
        if let Some(t) = self.t_rfc_ns {
            c.t_rfc = ns(t, "scheme.t_rfc_ns")?;
        }
        if let Some(t) = self.timing {
            c.timing = t;
        }
        if let Some(s) = self.counter_semantics {
            c.counter_semantics = s;
        }
        c.validate().context("[scheme]")?;
        Ok(c)
    }
}

/// `[abo]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AboSection {
    /// tABO_ACT.
    pub t_abo_act_ns: f64,
    /// Blocking time of one RFM.
    pub t_rfm_ns: f64,
    /// ACTs allowed inside tABO_ACT.
    pub abo_act: u32,
    /// ABO_Delay (defaults to n_mit).
    pub abo_delay: Option<u32>,
    /// What counts toward ABO_Delay.
    pub delay_counting: AboDelayCounting,
}

impl Default for AboSection {
    fn default() -> Self {
        Self { t_abo_act_ns: 180.0, t_rfm_ns: 350.0, abo_act: 3, abo_delay: None, delay_counting: AboDelayCounting::default() }
    }
}

/// `[run]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Run length in refresh windows (ignored when `duration_ns` is set).
    pub windows: u32,
    /// Run length in ns.
    pub duration_ns: Option<f64>,
    /// Write the full command log.
    pub log: bool,
    /// Independent banks to simulate (`simulate` only).
    pub banks: u32,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { windows: 1, duration_ns: None, log: true, banks: 1 }
    }
}

/// `[trace]` for `simulate`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum TraceSection {
    /// Refresh only.
    #[default]
    Idle,
    /// ASAP round-robin over `n` rows `stride` apart.
    RoundRobin {
        /// Pool size.
        n: u32,
        /// Row stride.
        stride: u32,
        /// First row.
        #[serde(default)]
        base_row: u32,
    },
    /// Uniform-random rows with exponential gaps (seeded by `--seed`).
    Benign {
        /// ACT count.
        count: usize,
        /// Mean gap between ACTs.
        mean_gap_ns: f64,
    },
    /// Line-format trace file (relative paths resolve against the config).
    File {
        /// Trace path.
        path: PathBuf,
    },
    /// Closed-loop feinting attack with initial pool `r1`.
    Feinting {
        /// Initial pool size.
        r1: u32,
    },
}


/// `[security]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SecuritySection {
    /// Schemes to solve.
    pub schemes: Vec<Scheme>,
    /// RFMs per Alert.
    pub n_mit: Vec<u32>,
    /// Target maximum hammered counts.
    pub max_hc: Vec<u32>,
    /// Recurrence variant.
    pub variant: RecurrenceVariant,
    /// Limit attacks to one refresh window.
    pub budget: bool,
    /// Blast radius.
    pub br: u32,
    /// ABO_ACT.
    pub abo_act: u32,
    /// Rows per bank.
    pub rows_per_bank: u32,
}

impl Default for SecuritySection {
    fn default() -> Self {
        Self {
            schemes: vec![Scheme::Pvac, Scheme::Prac, Scheme::Chronus],
            n_mit: vec![1, 2, 4],
            max_hc: vec![32, 64, 128, 2048],
            variant: RecurrenceVariant::EquationBody,
            budget: true,
            br: 2,
            abo_act: 3,
            rows_per_bank: 65536,
        }
    }
}

impl SecuritySection {
    /// Base analysis parameters (n_mit filled per grid point).
    pub fn params(&self) -> Result<AnalysisParams> {
        if self.br == 0 || self.rows_per_bank == 0 {
            return Err(bad("[security]: br and rows_per_bank must be positive"));
        }
        for &m in &self.n_mit {
            if !matches!(m, 1 | 2 | 4) {
                return Err(bad(format!("[security]: n_mit must be 1, 2 or 4 (got {m})")));
            }
        }
        if self.max_hc.contains(&0) {
            return Err(bad("[security]: max_hc values must be >= 1"));
        }
        if self.schemes.contains(&Scheme::Baseline) {
            return Err(bad("[security]: the baseline has no alert threshold"));
        }
        Ok(AnalysisParams {
            br: self.br,
            abo_act: self.abo_act,
            abo_delay: 1,
            n_mit: 1,
            rows_per_bank: self.rows_per_bank,
            variant: self.variant,
            budget: self.budget.then(AttackBudget::default),
        })
    }
}

/// One `bw-bound` point.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BwPoint {
    /// Scheme (sets tRC unless overridden).
    pub scheme: Scheme,
    /// RFMs per Alert.
    pub n_mit: u32,
    /// Alert threshold.
    pub n_bo: u32,
    /// Override tRC.
    #[serde(default)]
    pub t_rc_ns: Option<f64>,
}

/// Saturating single-row engine run compared against the bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineCheck {
    /// Scheme.
    pub scheme: Scheme,
    /// RFMs per Alert.
    pub n_mit: u32,
    /// Alert threshold.
    pub n_bo: u32,
    /// Keep the scheme's proactive mitigation (the bound assumes none).
    pub proactive: bool,
    /// Hammered row.
    pub row: u32,
    /// Run length in refresh windows.
    pub windows: u32,
}

impl Default for EngineCheck {
    fn default() -> Self {
        Self { scheme: Scheme::Pvac, n_mit: 4, n_bo: 237, proactive: false, row: 1000, windows: 1 }
    }
}

/// `[bw_bound]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BwSection {
    /// Points to evaluate.
    pub points: Vec<BwPoint>,
    /// Optional engine cross-check.
    pub engine_check: Option<EngineCheck>,
}

impl Default for BwSection {
    fn default() -> Self {
        let p = |scheme, n_mit, n_bo| BwPoint { scheme, n_mit, n_bo, t_rc_ns: None };
        Self {
            points: vec![
                p(Scheme::Pvac, 4, 237),
                p(Scheme::Prac, 4, 52),
                p(Scheme::Chronus, 1, 15),
                p(Scheme::Pvac, 4, 43),
            ],
            engine_check: Some(EngineCheck::default()),
        }
    }
}

/// `[csa]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsaSection {
    /// Bank sizes.
    pub rows: Vec<u32>,
    /// Blast radii.
    pub br: Vec<u32>,
    /// CSA timing growth per doubling of the bank.
    pub scaling_factor: f64,
    /// Override tUP.
    pub t_up_ns: Option<f64>,
}

impl Default for CsaSection {
    fn default() -> Self {
        Self {
            rows: vec![65536, 131072, 262144],
            br: vec![1, 2, 4],
            scaling_factor: CSA_SCALING_PER_DOUBLING,
            t_up_ns: None,
        }
    }
}

/// `[sweep]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Schemes.
    pub schemes: Vec<Scheme>,
    /// Maximum hammered counts (each sets N_BO via the solver).
    pub max_hc: Vec<u32>,
    /// RFMs per Alert.
    pub n_mit: u32,
    /// Row strides.
    pub strides: Vec<u32>,
    /// Pool sizes.
    pub pools: Vec<u32>,
    /// First pool row.
    pub base_row: u32,
    /// Run length in refresh windows.
    pub windows: u32,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            schemes: vec![Scheme::Pvac, Scheme::Prac, Scheme::Chronus],
            max_hc: vec![32, 64],
            n_mit: 4,
            strides: vec![1, 2, 3, 4, 5],
            pools: vec![8, 32, 128, 512, 1024, 4096, 8192],
            base_row: 0,
            windows: 1,
        }
    }
}

/// `[oracle]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    /// Rows of the small bank.
    pub rows: u32,
    /// Schemes.
    pub schemes: Vec<Scheme>,
    /// Alert thresholds.
    pub n_bo: Vec<u32>,
    /// RFMs per Alert (Chronus uses the first).
    pub n_mit: Vec<u32>,
    /// Pool sizes to replay (default: a spread over the valid range).
    pub r1: Option<Vec<u32>>,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            rows: 256,
            schemes: vec![Scheme::Pvac, Scheme::Prac, Scheme::Qprac, Scheme::Chronus],
            n_bo: vec![1, 2, 4, 8, 16],
            n_mit: vec![1, 4],
            r1: None,
        }
    }
}

/// `[energy]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySection {
    /// Counter storage for victim counting (others always use in-DSA counters).
    pub layout: CsaKind,
}

impl Default for EnergySection {
    fn default() -> Self {
        Self { layout: CsaKind::OptimizedDualCsa }
    }
}

impl EnergySection {
    /// Layout for `scheme`.
    pub fn layout_for(&self, scheme: Scheme) -> CsaLayout {
        if scheme != Scheme::Pvac {
            return CsaLayout::in_dsa();
        }
        match self.layout {
            CsaKind::InDsaRow => CsaLayout::in_dsa(),
            CsaKind::NaiveCsa => CsaLayout::naive(),
            CsaKind::OptimizedDualCsa => CsaLayout::optimized_dual(),
        }
    }
}

/// A config error (maps to exit code 2).
pub fn bad(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

/// Convert a config duration in ns.
pub fn ns(v: f64, key: &str) -> Result<Ps> {
    if !v.is_finite() || v < 0.0 {
        return Err(bad(format!("{key}: expected a non-negative duration in ns, got {v}")));
    }
    Ok(Ps::from_ns(v))
}

impl FileConfig {
    /// Read and parse `path`; parse errors carry line and column.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("reading {}: {e}", path.display())))?;
        let cfg: FileConfig = toml::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        cfg.geometry.validate().context("[geometry]")?;
        Ok(cfg)
    }

    /// Resolved refresh config (tRFC from `scheme`).
    pub fn refresh_config(&self, scheme: &SchemeConfig) -> Result<RefreshConfig> {
        let mut r = RefreshConfig::for_mode(self.refresh.mode);
        if let Some(v) = self.refresh.t_refw_ns {
            r.t_refw = ns(v, "refresh.t_refw_ns")?;
        }
        if let Some(v) = self.refresh.t_refi_ns {
            r.t_refi = ns(v, "refresh.t_refi_ns")?;
        }
        r.order = self.refresh.order;
        r.t_rfc = scheme.t_rfc;
        r.validate().context("[refresh]")?;
        Ok(r)
    }

    /// Resolved ABO config for `scheme`.
    pub fn abo_config(&self, scheme: &SchemeConfig) -> Result<AboConfig> {
        let a = AboConfig {
            t_abo_act: ns(self.abo.t_abo_act_ns, "abo.t_abo_act_ns")?,
            t_rfm: ns(self.abo.t_rfm_ns, "abo.t_rfm_ns")?,
            abo_act: self.abo.abo_act,
            abo_delay: self.abo.abo_delay.unwrap_or(scheme.n_mit),
            delay_counting: self.abo.delay_counting,
        };
        a.validate(scheme).context("[abo]")?;
        Ok(a)
    }

    /// Run length.
    pub fn duration(&self, refresh: &RefreshConfig) -> Result<Ps> {
        match self.run.duration_ns {
            Some(d) => ns(d, "run.duration_ns"),
            None => Ok(refresh.t_refw * u64::from(self.run.windows)),
        }
    }

    /// Engine setup for `scheme` with the file's geometry/refresh/ABO.
    pub fn engine_setup(&self, scheme: SchemeConfig, duration: Ps, layout: CsaLayout) -> Result<EngineSetup> {
        let refresh = self.refresh_config(&scheme)?;
        let abo = self.abo_config(&scheme)?;
        let setup = EngineSetup {
            geometry: self.geometry,
            refresh,
            abo,
            layout,
            duration,
            log: self.run.log,
            track_disturbance: false,
            bank: 0,
            scheme,
        };
        setup.validate().context("engine setup")?;
        Ok(setup)
    }
}
