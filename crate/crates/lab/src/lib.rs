//! Std companion to `etap-core`: ATNM golden matrix files, CSV reports, and
//! the `etap-lab` command line (`verify`, `bench`, `model`, `simulate`).

pub mod bench;
pub mod cli;
pub mod config;
pub mod golden;
pub mod model;
pub mod simulate;
pub mod verify;

use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] etap_core::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const VERIFICATION_FAILED: i32 = 1;
    pub const USAGE: i32 = 2;
}

/// Serialize rows as CSV with a header row.
pub fn write_csv<W: io::Write, T: serde::Serialize>(out: W, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
