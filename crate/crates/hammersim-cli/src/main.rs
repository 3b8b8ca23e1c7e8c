//! `hammersim`: scenario runner for the RowHammer mitigation simulator.
//!
//! Exit codes: 0 ok, 2 config error, 3 invariant violation, 1 anything else
//! (I/O).

mod config;
mod scenarios;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::FileConfig;
use scenarios::{Ctx, Report};

#[derive(Parser)]
#[command(name = "hammersim", version, about = "RowHammer mitigation simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Refresh-only run: per-window bandwidth and the Alert cascade.
    Domino(#[command(flatten)] Common),
    /// Largest safe N_BO per scheme and target hammered count.
    SecurityTable(#[command(flatten)] Common),
    /// Bandwidth an attacker can force into RFMs.
    BwBound(#[command(flatten)] Common),
    /// Counter-update latency breakdown.
    CsaLatency(#[command(flatten)] Common),
    /// Run a trace through the engine on one or more banks.
    Simulate(#[command(flatten)] Common),
    /// Round-robin pools over strides and pool sizes.
    SweepStride(#[command(flatten)] Common),
    /// Replay the feinting attack and check the analyzer bound.
    OracleCheck(#[command(flatten)] Common),
}

#[derive(Args)]
struct Common {
    /// TOML scenario config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// RNG seed for generated traces.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Domino(_) => "domino",
            Cmd::SecurityTable(_) => "security-table",
            Cmd::BwBound(_) => "bw-bound",
            Cmd::CsaLatency(_) => "csa-latency",
            Cmd::Simulate(_) => "simulate",
            Cmd::SweepStride(_) => "sweep-stride",
            Cmd::OracleCheck(_) => "oracle-check",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Cmd::Domino(c)
            | Cmd::SecurityTable(c)
            | Cmd::BwBound(c)
            | Cmd::CsaLatency(c)
            | Cmd::Simulate(c)
            | Cmd::SweepStride(c)
            | Cmd::OracleCheck(c) => c,
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    seed: u64,
    jobs: Option<usize>,
    config: &'a FileConfig,
    outputs: &'a [String],
    violations: &'a [String],
}

fn run(cmd: &Cmd) -> Result<Report> {
    let c = cmd.common();
    let cfg = FileConfig::load(&c.config)?;
    if c.jobs == Some(0) {
        return Err(config::bad("--jobs must be >= 1"));
    }
    std::fs::create_dir_all(&c.out)?;
    let ctx = Ctx { cfg: &cfg, base: scenarios::base_dir(&c.config), out: c.out.clone(), seed: c.seed };
    let mut rep = hammersim_core::par::with_jobs(c.jobs, || match cmd {
        Cmd::Domino(_) => scenarios::domino(&ctx),
        Cmd::SecurityTable(_) => scenarios::security(&ctx),
        Cmd::BwBound(_) => scenarios::bw(&ctx),
        Cmd::CsaLatency(_) => scenarios::csa_latency(&ctx),
        Cmd::Simulate(_) => scenarios::simulate(&ctx),
        Cmd::SweepStride(_) => scenarios::sweep(&ctx),
        Cmd::OracleCheck(_) => scenarios::oracle(&ctx),
    })?;
    rep.outputs.push("manifest.json".into());
    let manifest = Manifest {
        command: cmd.name(),
        seed: c.seed,
        jobs: c.jobs,
        config: &cfg,
        outputs: &rep.outputs,
        violations: &rep.violations,
    };
    let f = std::fs::File::create(c.out.join("manifest.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), &manifest)?;
    Ok(rep)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use hammersim_core::Error;
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Config(_) | Error::RowOutOfRange { .. }) => 2,
        Some(Error::Invariant(_)) => 3,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.cmd) {
        Ok(rep) => {
            for line in &rep.summary {
                println!("{line}");
            }
            if rep.violations.is_empty() {
                ExitCode::SUCCESS
            } else {
                for v in &rep.violations {
                    eprintln!("violation: {v}");
                }
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
