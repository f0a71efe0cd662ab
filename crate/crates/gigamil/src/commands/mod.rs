//! Pipeline stages behind the subcommands. Each takes a validated
//! [`RunConfig`](crate::config::RunConfig) and reports what it did; the binary
//! only parses flags and prints.

pub mod evaluate;
pub mod infer;
pub mod synth;
pub mod tile;
pub mod train;

use std::path::Path;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats;

/// Writes a full configuration with every default spelled out.
pub fn init(path: &Path, reference: bool, force: bool) -> Result<RunConfig> {
    if path.exists() && !force {
        return Err(CliError::Config(format!(
            "{} already exists (pass --force to overwrite)",
            path.display()
        )));
    }
    let cfg = if reference { RunConfig::reference() } else { RunConfig::desk() };
    formats::write_json(path, &cfg)?;
    Ok(cfg)
}
