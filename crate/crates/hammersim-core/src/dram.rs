//! Device geometry, timing-parameter sets and refresh parameters.
//!
//! Timing values are DDR5-4800 (16 Gb); the CSA set is the counter-subarray
//! timing derived from the shorter CSA bitlines.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::Ps;

/// Bank geometry and disturbance model parameters.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceGeometry {
    /// Rows in one bank.
    pub rows_per_bank: u32,
    /// Banks per sub-channel.
    pub banks: u32,
    /// Rows per data subarray (DSA); disturbance never crosses a DSA.
    pub rows_per_dsa: u32,
    /// Counter width in bits.
    pub counter_bits: u8,
    /// Blast radius BR: rows at distance 1..=BR are victims.
    pub blast_radius: u32,
}

impl Default for DeviceGeometry {
    fn default() -> Self {
        Self {
            rows_per_bank: 65536,
            banks: 32,
            rows_per_dsa: 512,
            counter_bits: 8,
            blast_radius: 2,
        }
    }
}

impl DeviceGeometry {
    /// A small bank for desk-scale experiments (one DSA covering all rows).
    pub fn small(rows: u32) -> Self {
        Self {
            rows_per_bank: rows,
            banks: 1,
            rows_per_dsa: rows,
            ..Self::default()
        }
    }

    /// Check the geometry invariants.
    pub fn validate(&self) -> Result<()> {
        if self.rows_per_bank == 0 || self.rows_per_dsa == 0 {
            return config_err("rows_per_bank and rows_per_dsa must be positive");
        }
        if !self.rows_per_bank.is_multiple_of(self.rows_per_dsa) {
            return config_err(format!(
                "rows_per_bank ({}) must be a multiple of rows_per_dsa ({})",
                self.rows_per_bank, self.rows_per_dsa
            ));
        }
        if self.blast_radius == 0 {
            return config_err("blast_radius must be >= 1");
        }
        if !(1..=16).contains(&self.counter_bits) {
            return config_err("counter_bits must be in 1..=16");
        }
        if self.banks == 0 {
            return config_err("banks must be >= 1");
        }
        Ok(())
    }

    /// Largest representable counter value.
    pub fn counter_max(&self) -> u16 {
        ((1u32 << self.counter_bits) - 1) as u16
    }

    /// Index of the DSA holding `row`.
    pub fn dsa_of(&self, row: u32) -> u32 {
        row / self.rows_per_dsa
    }

    /// Number of DSAs per bank.
    pub fn dsas(&self) -> u32 {
        self.rows_per_bank / self.rows_per_dsa
    }
}

/// Which built-in timing set a [`TimingSet`] carries.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimingLabel {
    /// Baseline DDR5 timing.
    Default,
    /// PRAC timing (counter read-modify-write folded into precharge).
    #[serde(alias = "PRAC", alias = "prac")]
    Prac,
    /// Counter-subarray timing.
    #[serde(alias = "CSA", alias = "csa")]
    Csa,
}

/// Six core timing parameters.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingSet {
    /// Which set this is.
    pub label: TimingLabel,
    /// ACT to PRE.
    pub t_ras: Ps,
    /// PRE to ACT.
    pub t_rp: Ps,
    /// ACT to ACT, same bank.
    pub t_rc: Ps,
    /// Read to PRE.
    pub t_rtp: Ps,
    /// Write recovery.
    pub t_wr: Ps,
    /// ACT to column command.
    pub t_rcd: Ps,
}

impl TimingSet {
    /// The reference constants for `label`.
    pub fn builtin(label: TimingLabel) -> TimingSet {
        let ns = Ps::from_ns;
        match label {
            TimingLabel::Default => TimingSet {
                label,
                t_ras: ns(32.0),
                t_rp: ns(16.0),
                t_rc: ns(48.0),
                t_rtp: ns(7.5),
                t_wr: ns(30.0),
                t_rcd: ns(16.0),
            },
            TimingLabel::Prac => TimingSet {
                label,
                t_ras: ns(16.0),
                t_rp: ns(36.0),
                t_rc: ns(52.0),
                t_rtp: ns(5.0),
                t_wr: ns(10.0),
                t_rcd: ns(16.0),
            },
            // Only tRCD/tRAS/tRP/tWR are specified for the CSA; tRC is taken
            // as tRAS + tRP and tRTP is left at the default value.
            TimingLabel::Csa => TimingSet {
                label,
                t_ras: ns(16.7),
                t_rp: ns(4.1),
                t_rc: ns(20.8),
                t_rtp: ns(7.5),
                t_wr: ns(19.2),
                t_rcd: ns(7.6),
            },
        }
    }

    /// Check positivity and `tRC >= max(tRAS, tRP)`.
    pub fn validate(&self) -> Result<()> {
        let all = [self.t_ras, self.t_rp, self.t_rc, self.t_rtp, self.t_wr, self.t_rcd];
        if all.iter().any(|t| t.0 == 0) {
            return config_err(format!("{:?} timing has a zero parameter", self.label));
        }
        if self.t_rc < self.t_ras.max(self.t_rp) {
            return config_err(format!("{:?} timing: tRC < max(tRAS, tRP)", self.label));
        }
        Ok(())
    }
}

/// Refresh command flavour.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RefreshMode {
    /// REFab, normal mode.
    AllBankNormal,
    /// REFab, fine-granularity mode.
    AllBankFine,
    /// REFsb, fine-granularity mode.
    SameBankFine,
}

/// Order in which a bank's rows are assigned to refresh slots.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RefreshOrder {
    /// Slot k refreshes rows `[k*n, (k+1)*n)`.
    #[default]
    Sequential,
    /// Slot k refreshes one row in each of `n` DSAs spaced two apart
    /// (DSA 0, 2, 4, ...), the REFab pattern used for CSA cost accounting.
    DsaStriped,
}

/// Refresh timing.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefreshConfig {
    /// Refresh window.
    pub t_refw: Ps,
    /// Interval between REF commands.
    pub t_refi: Ps,
    /// Duration of one REF.
    pub t_rfc: Ps,
    /// Command flavour.
    pub mode: RefreshMode,
    /// Row-to-slot assignment.
    #[serde(default)]
    pub order: RefreshOrder,
}

impl Default for RefreshConfig {
    fn default() -> Self {
        Self::for_mode(RefreshMode::AllBankNormal)
    }
}

impl RefreshConfig {
    /// Reference 16 Gb values for `mode`.
    pub fn for_mode(mode: RefreshMode) -> Self {
        let (t_refi, t_rfc) = match mode {
            RefreshMode::AllBankNormal => (Ps::from_ns(3900.0), Ps::ns(295)),
            RefreshMode::AllBankFine => (Ps::from_ns(1950.0), Ps::ns(160)),
            RefreshMode::SameBankFine => (Ps::from_ns(1950.0 / 4.0), Ps::ns(130)),
        };
        Self {
            t_refw: Ps::ms(32),
            t_refi,
            t_rfc,
            mode,
            order: RefreshOrder::Sequential,
        }
    }

    /// Same config with a different tRFC (MOAT uses 410 ns).
    pub fn with_rfc(mut self, t_rfc: Ps) -> Self {
        self.t_rfc = t_rfc;
        self
    }

    /// Check `tRFC < tREFI < tREFW`.
    pub fn validate(&self) -> Result<()> {
        if self.t_refi.0 == 0 || self.t_refi >= self.t_refw {
            return config_err("refresh: need 0 < tREFI < tREFW");
        }
        if self.t_rfc >= self.t_refi {
            return config_err("refresh: need tRFC < tREFI");
        }
        Ok(())
    }

    /// REF commands per refresh window, `floor(tREFW / tREFI)`.
    pub fn refs_per_window(&self) -> u64 {
        self.t_refw.0 / self.t_refi.0
    }
}

/// Rows refreshed per REF: `ceil(rows / floor(tREFW / tREFI))`.
pub fn rows_per_refresh(geometry: &DeviceGeometry, refresh: &RefreshConfig) -> u32 {
    let slots = refresh.refs_per_window();
    (geometry.rows_per_bank as u64).div_ceil(slots) as u32
}

/// Fraction of time an idle bank accepts ACTs: `1 - tRFC / tREFI`.
pub fn idle_bandwidth(refresh: &RefreshConfig) -> f64 {
    1.0 - refresh.t_rfc.0 as f64 / refresh.t_refi.0 as f64
}

/// Rows refreshed by the `slot`-th REF of a window (empty for spare REFs at
/// the end of the window). Every row is refreshed exactly once per window.
pub fn refresh_slot_rows(
    geometry: &DeviceGeometry,
    refresh: &RefreshConfig,
    slot: u64,
) -> Vec<u32> {
    let n = rows_per_refresh(geometry, refresh) as u64;
    let rows = geometry.rows_per_bank as u64;
    match refresh.order {
        RefreshOrder::Sequential => {
            let lo = (slot * n).min(rows);
            let hi = ((slot + 1) * n).min(rows);
            (lo as u32..hi as u32).collect()
        }
        RefreshOrder::DsaStriped => striped_rows(geometry, n, slot),
    }
}

// Slot layout for DsaStriped: DSAs are grouped into blocks of 2n; each block
// holds two interleaved stripes (even and odd DSAs). A stripe contributes
// one row per DSA per slot, walking the DSA offset upward.
fn striped_rows(geometry: &DeviceGeometry, n: u64, slot: u64) -> Vec<u32> {
    let dsa_rows = geometry.rows_per_dsa as u64;
    let dsas = geometry.dsas() as u64;
    if n == 0 || !dsas.is_multiple_of(2 * n) || n * dsa_rows * (dsas / n) < geometry.rows_per_bank as u64
    {
        // Geometry does not tile into stripes; fall back to sequential.
        let rows = geometry.rows_per_bank as u64;
        let lo = (slot * n).min(rows);
        let hi = ((slot + 1) * n).min(rows);
        return (lo as u32..hi as u32).collect();
    }
    let stripes = dsas / n;
    if slot >= stripes * dsa_rows {
        return Vec::new();
    }
    let stripe = slot / dsa_rows;
    let offset = slot % dsa_rows;
    let block = stripe / 2;
    let parity = stripe % 2;
    (0..n)
        .map(|j| {
            let dsa = block * 2 * n + parity + 2 * j;
            (dsa * dsa_rows + offset) as u32
        })
        .collect()
}
