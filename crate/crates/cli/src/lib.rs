//! `timecheck`: calibrate timing baselines, attest devices, and reproduce
//! the evaluation tables.

pub mod calibrate;
pub mod reproduce;
pub mod scenario;
pub mod session;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use timecheck_core::error::{DeviceError, ProtocolError, StatsError};
use timecheck_core::exec::Execution;

pub use calibrate::{cmd_calibrate, CalibrateArgs};
pub use reproduce::{cmd_reproduce, ReproduceArgs};
pub use session::{cmd_challenge, cmd_serve, ChallengeArgs, ServeArgs};

pub const EXIT_ACCEPT: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_REJECT: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, #[source] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// How a command ended, for the exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Accept,
    Reject,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Done | Outcome::Accept => EXIT_ACCEPT,
            Outcome::Reject => EXIT_REJECT,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "timecheck", version, about = "Timing-based attestation with randomized multi-pass polynomial challenges")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Measure a clean device and write its baseline profile.
    Calibrate(CalibrateArgs),
    /// Attest a device; exit 0 accept, 2 reject, 1 error.
    Challenge(ChallengeArgs),
    /// Regenerate an evaluation table as CSV.
    Reproduce(ReproduceArgs),
    /// Run a simulated device behind a TCP listener.
    Serve(ServeArgs),
}

pub(crate) fn exec_mode(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

pub(crate) fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create_file(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Calibrate(a) => cmd_calibrate(a, out).map(|_| Outcome::Done),
        Command::Challenge(a) => cmd_challenge(a, out).map(|(o, _)| o),
        Command::Reproduce(a) => {
            for f in cmd_reproduce(a, out)? {
                let _ = writeln!(out, "wrote {}", f.display());
            }
            Ok(Outcome::Done)
        }
        Command::Serve(a) => cmd_serve(a, err).map(|_| Outcome::Done),
    }
}
