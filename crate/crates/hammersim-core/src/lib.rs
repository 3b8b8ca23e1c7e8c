//! Command-level DRAM RowHammer-mitigation simulator.
//!
//! The crate is organised bottom-up:
//!
//! - [`dram`]: geometry, timing sets and refresh parameters.
//! - [`counters`]: per-row counters and counter-subarray (CSA) layouts.
//! - [`schemes`]: PRAC, PVAC, Chronus, QPRAC and MOAT state machines.
//! - [`engine`]: single-bank event-driven simulator with the Alert Back-Off protocol.
//! - [`attack`]: trace generators (idle, round-robin, feinting, benign).
//! - [`security`]: closed-form worst-case analysis and the brute-force oracle.
//! - [`energy`]: latency-proportional energy model and per-window summaries.
//!
//! All durations are integer picoseconds ([`Ps`]).

#![warn(missing_docs)]

pub mod attack;
pub mod counters;
pub mod dram;
pub mod energy;
pub mod engine;
mod error;
pub mod par;
pub mod schemes;
pub mod security;
mod time;

pub use error::{Error, Result};
pub use time::Ps;
