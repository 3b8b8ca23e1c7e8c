use thiserror::Error;

/// Errors raised by configuration validation and simulation.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid config: {0}")]
    Config(String),
    /// A row index outside the bank.
    #[error("row {row} out of range (bank has {rows} rows)")]
    RowOutOfRange {
        /// Offending row.
        row: u32,
        /// Rows in the bank.
        rows: u32,
    },
    /// A runtime invariant failed (timing audit, counter bound, ...).
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
