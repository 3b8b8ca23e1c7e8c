//! Trace generators: idle, round-robin adversarial streams, a closed-loop
//! feinting attack and a uniform-random benign stream.
//!
//! Traces serialise one event per line: `<ns|ASAP>,<bank>,ACT,<row>` for
//! activations and `<ns|ASAP>,<bank>,IDLE,<duration_ns>` for idle gaps.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::counters::victim_set;
use crate::dram::DeviceGeometry;
use crate::engine::{Engine, EventKind, TraceEvent};
use crate::error::{config_err, Error, Result};
use crate::Ps;

/// Refresh-only trace: a single idle gap of `duration` (empty for zero).
pub fn gen_idle(duration: Ps) -> Vec<TraceEvent> {
    if duration.0 == 0 {
        Vec::new()
    } else {
        vec![TraceEvent::idle(0, duration)]
    }
}

/// Round-robin adversarial stream.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundRobinSpec {
    /// Row-pool size.
    pub n: u32,
    /// Distance between consecutive pool rows.
    pub stride: u32,
    /// First pool row.
    pub base_row: u32,
}

impl RoundRobinSpec {
    /// Pool rows in issue order.
    pub fn rows(&self) -> Vec<u32> {
        (0..self.n).map(|i| self.base_row + i * self.stride).collect()
    }

    /// Check that the pool fits in the bank.
    pub fn validate(&self, geometry: &DeviceGeometry) -> Result<()> {
        if self.n == 0 || self.stride == 0 {
            return config_err("round-robin: n and stride must be >= 1");
        }
        let last = u64::from(self.base_row) + u64::from(self.n - 1) * u64::from(self.stride);
        if last >= u64::from(geometry.rows_per_bank) {
            return config_err(format!(
                "round-robin: pool ends at row {last}, bank has {} rows",
                geometry.rows_per_bank
            ));
        }
        Ok(())
    }
}

/// ASAP ACT stream cycling through the pool; the engine's run length bounds it.
pub fn gen_round_robin(
    spec: &RoundRobinSpec,
    geometry: &DeviceGeometry,
) -> Result<impl Iterator<Item = TraceEvent>> {
    spec.validate(geometry)?;
    Ok(spec.rows().into_iter().cycle().map(|r| TraceEvent::act(0, r)))
}

/// Uniform-random benign stream: `count` ACTs with exponential inter-arrival
/// gaps of mean `mean_gap`, deterministic in `seed`.
pub fn gen_benign(seed: u64, geometry: &DeviceGeometry, mean_gap: Ps, count: usize) -> Vec<TraceEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0f64;
    (0..count)
        .map(|_| {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            t += -u.ln() * mean_gap.0 as f64;
            let row = rng.random_range(0..geometry.rows_per_bank);
            TraceEvent::act_at(Ps(t as u64), 0, row)
        })
        .collect()
}

/// Write a trace in the line format.
pub fn write_trace<W: Write>(mut w: W, trace: &[TraceEvent]) -> Result<()> {
    let io = |e: std::io::Error| Error::Invariant(format!("trace write failed: {e}"));
    for ev in trace {
        let time = ev.time.map_or_else(|| "ASAP".to_string(), |t| format!("{:.3}", t.as_ns()));
        match ev.kind {
            EventKind::Act(row) => writeln!(w, "{time},{},ACT,{row}", ev.bank).map_err(io)?,
            EventKind::Idle(d) => writeln!(w, "{time},{},IDLE,{:.3}", ev.bank, d.as_ns()).map_err(io)?,
            EventKind::EndOfTrace => break,
        }
    }
    Ok(())
}

/// Parse a trace; blank lines and `#` comments are skipped.
pub fn parse_trace<R: BufRead>(r: R) -> Result<Vec<TraceEvent>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Config(format!("trace line {}: {e}", i + 1)))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| Error::Config(format!("trace line {}: {what}: `{line}`", i + 1));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let time = match f[0] {
            "ASAP" | "asap" => None,
            ns => Some(Ps::from_ns(ns.parse::<f64>().map_err(|_| bad("bad time"))?)),
        };
        let bank = f[1].parse::<u32>().map_err(|_| bad("bad bank"))?;
        let kind = match f[2] {
            "ACT" => EventKind::Act(f[3].parse().map_err(|_| bad("bad row"))?),
            "IDLE" => EventKind::Idle(Ps::from_ns(f[3].parse::<f64>().map_err(|_| bad("bad duration"))?)),
            _ => return Err(bad("unknown event kind")),
        };
        out.push(TraceEvent { time, bank, kind });
    }
    Ok(out)
}

/// Counting discipline the feinting attack targets.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Discipline {
    /// Victim counters (PVAC): stride-5 layout, one aggressor per 4 victims.
    VictimBased,
    /// Aggressor counters (PRAC family): contiguous aggressor pool.
    AggressorBased,
}

/// Feinting attack parameters.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeintingSpec {
    /// Counting discipline.
    pub discipline: Discipline,
    /// Initial pool size (victims or aggressors).
    pub r1: u32,
    /// Alert threshold of the defence.
    pub n_bo: u32,
    /// RFMs per Alert of the defence.
    pub n_mit: u32,
    /// ACTs allowed inside tABO_ACT.
    pub abo_act: u32,
    /// ABO_Delay.
    pub abo_delay: u32,
}

/// Rows of a feinting attack.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeintingLayout {
    /// Rows the attacker activates.
    pub aggressors: Vec<u32>,
    /// Pool the attacker shrinks (victims for VictimBased, aggressors otherwise).
    pub pool: Vec<u32>,
    /// The victim the final phase converges on (AggressorBased only).
    pub target: Option<u32>,
}

impl FeintingSpec {
    /// Valid `r1` range: victim-based `[2BR, floor(rows * 2BR / (2BR+1))]`
    /// (stride-`2BR+1` packing), aggressor-based `[1, rows-1]`.
    pub fn r1_range(discipline: Discipline, geometry: &DeviceGeometry) -> (u32, u32) {
        match discipline {
            Discipline::VictimBased => {
                let k = u64::from(2 * geometry.blast_radius);
                (2 * geometry.blast_radius, (u64::from(geometry.rows_per_bank) * k / (k + 1)) as u32)
            }
            Discipline::AggressorBased => (1, geometry.rows_per_bank - 1),
        }
    }

    /// Largest `r1` [`FeintingSpec::layout`] can place: victim blocks never
    /// straddle a DSA, so this can sit below the top of [`Self::r1_range`].
    pub fn max_placeable(discipline: Discipline, geometry: &DeviceGeometry) -> u32 {
        let (_, hi) = Self::r1_range(discipline, geometry);
        match discipline {
            Discipline::VictimBased => {
                let br = geometry.blast_radius;
                let blocks = geometry.rows_per_dsa / (2 * br + 1) * geometry.dsas();
                hi.min(blocks * 2 * br)
            }
            Discipline::AggressorBased => hi,
        }
    }

    /// Lay the pool out in `geometry`.
    ///
    /// VictimBased: blocks of 5 rows with the aggressor in the middle
    /// (`5j+2`) and victims at `5j, 5j+1, 5j+3, 5j+4`; blocks never straddle a
    /// DSA. AggressorBased: rows `[0, r1]` except the target victim `r1/2`.
    pub fn layout(&self, geometry: &DeviceGeometry) -> Result<FeintingLayout> {
        if self.n_bo == 0 {
            return config_err("feinting: n_bo must be >= 1");
        }
        let (lo, hi) = Self::r1_range(self.discipline, geometry);
        if self.r1 < lo || self.r1 > hi {
            return config_err(format!("feinting: r1 = {} outside [{lo}, {hi}]", self.r1));
        }
        let br = geometry.blast_radius;
        match self.discipline {
            Discipline::VictimBased => {
                let width = 2 * br + 1;
                let per_dsa = geometry.rows_per_dsa / width;
                let blocks = self.r1.div_ceil(2 * br);
                if blocks > per_dsa * geometry.dsas() {
                    return config_err(format!("feinting: r1 = {} does not fit the stride layout", self.r1));
                }
                let mut aggressors = Vec::new();
                let mut pool = Vec::new();
                for b in 0..blocks {
                    let start = (b / per_dsa) * geometry.rows_per_dsa + (b % per_dsa) * width;
                    let a = start + br;
                    aggressors.push(a);
                    for v in victim_set(a, geometry) {
                        if (pool.len() as u32) < self.r1 {
                            pool.push(v);
                        }
                    }
                }
                Ok(FeintingLayout { aggressors, pool, target: None })
            }
            Discipline::AggressorBased => {
                // Rows [0, r1] minus the target in the middle.
                let target = self.r1 / 2;
                let pool: Vec<u32> = (0..=self.r1).filter(|&r| r != target).collect();
                Ok(FeintingLayout { aggressors: pool.clone(), pool, target: Some(target) })
            }
        }
    }
}

/// What a closed-loop feinting run did.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FeintingOutcome {
    /// Rows prepared in the setup phase (aggressors).
    pub prepared: u32,
    /// ACTs issued in the setup phase.
    pub setup_acts: u64,
    /// ACTs issued in the online rounds.
    pub online_acts: u64,
    /// ACTs issued in the final phase.
    pub final_acts: u64,
    /// Online rounds run.
    pub rounds: u32,
    /// Pool rows alive when the online phase ended.
    pub survivors: Vec<u32>,
    /// True if the run hit the end of the simulated span.
    pub truncated: bool,
}

struct Attacker {
    discipline: Discipline,
    pool: BTreeSet<u32>,
    aggressors: Vec<u32>,
    geometry: DeviceGeometry,
}

impl Attacker {
    // Drop pool rows the defence mitigated.
    fn observe(&mut self, engine: &mut Engine) {
        let fb = engine.take_feedback();
        let gone = match self.discipline {
            Discipline::VictimBased => fb.refreshed,
            Discipline::AggressorBased => fb.reset,
        };
        for r in gone {
            self.pool.remove(&r);
        }
    }

    // An aggressor is worth activating while it still hits a live pool row.
    fn live(&self, a: u32) -> bool {
        match self.discipline {
            Discipline::VictimBased => victim_set(a, &self.geometry).iter().any(|v| self.pool.contains(v)),
            Discipline::AggressorBased => self.pool.contains(&a),
        }
    }

    fn act(&mut self, engine: &mut Engine, a: u32) -> Result<bool> {
        let issued = engine.act(a, None)?.is_some();
        self.observe(engine);
        Ok(issued)
    }
}

/// Run the feinting attack closed-loop against `engine`.
///
/// Setup: `n_bo - 1` ACTs to every prepared aggressor, round-robin. Online:
/// rounds activating every aggressor that still hits a live pool row, dropping
/// rows the defence mitigates, until the pool is down to 1 victim
/// (VictimBased) or `2*BR` aggressors (AggressorBased). Final: the survivors
/// keep being activated until the defence mitigates them (at most
/// `n_bo + abo_act + abo_delay` ACTs each).
pub fn run_feinting(engine: &mut Engine, spec: &FeintingSpec) -> Result<FeintingOutcome> {
    let geometry = engine.setup().geometry;
    let layout = spec.layout(&geometry)?;
    let mut at = Attacker {
        discipline: spec.discipline,
        pool: layout.pool.iter().copied().collect(),
        aggressors: layout.aggressors.clone(),
        geometry,
    };
    let mut out = FeintingOutcome { prepared: layout.aggressors.len() as u32, ..Default::default() };
    let goal = match spec.discipline {
        Discipline::VictimBased => 1,
        Discipline::AggressorBased => (2 * geometry.blast_radius) as usize,
    };

    engine.take_feedback();
    for _ in 1..spec.n_bo {
        for i in 0..at.aggressors.len() {
            let a = at.aggressors[i];
            if !at.act(engine, a)? {
                out.truncated = true;
                return Ok(out);
            }
            out.setup_acts += 1;
        }
    }

    while at.pool.len() > goal {
        out.rounds += 1;
        let before = at.pool.len();
        let order: Vec<u32> = at.aggressors.iter().copied().filter(|&a| at.live(a)).collect();
        for a in order {
            if at.pool.len() <= goal {
                break;
            }
            if !at.live(a) {
                continue;
            }
            if !at.act(engine, a)? {
                out.truncated = true;
                out.survivors = at.pool.iter().copied().collect();
                return Ok(out);
            }
            out.online_acts += 1;
        }
        if at.pool.len() == before && out.rounds > 4 * spec.n_bo.max(1) + 64 {
            // No mitigation for many rounds: the defence is not reacting.
            break;
        }
    }
    out.survivors = at.pool.iter().copied().collect();

    let cap = u64::from(spec.n_bo + spec.abo_act + spec.abo_delay);
    let finals: Vec<u32> = at.aggressors.iter().copied().filter(|&a| at.live(a)).collect();
    let mut spent = 0u64;
    while !at.pool.is_empty() && spent < cap * finals.len().max(1) as u64 {
        let mut any = false;
        for &a in &finals {
            if at.live(a) {
                any = true;
                if !at.act(engine, a)? {
                    out.truncated = true;
                    return Ok(out);
                }
                out.final_acts += 1;
                spent += 1;
            }
        }
        if !any {
            break;
        }
    }
    Ok(out)
}
