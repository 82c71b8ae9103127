//! Experiment harness for the continual-learning workbench.
//!
//! The binary exposes four subcommands: `split` writes a reproducible
//! i-Blurry split file, `run` executes one training run per replicate seed
//! and persists results JSON plus curve CSVs, `compare` renders aggregate
//! tables over results files, and `curve` emits accuracy-curve CSV/SVG.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::Path;

pub use commands::{cmd_compare, cmd_curve, cmd_run, cmd_split};
pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use report::ResultsFile;

/// Write via a temp file and rename so readers never observe a torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
