pub mod eval;
pub mod gradcheck;
pub mod phantom;
pub mod segment;
pub mod train;

use std::fs;
use std::path::Path;

use relaynet_core::{Error, Result};

/// Seed supplied through the `RELAYNET_SEED` environment variable, if any.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var("RELAYNET_SEED") {
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("RELAYNET_SEED must be an integer, got {v:?}"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(std::env::VarError::NotUnicode(_)) => {
            Err(Error::Config("RELAYNET_SEED is not valid UTF-8".into()))
        }
    }
}

/// Writes the resolved settings of a run into `dir/config.txt`. Settings
/// echoes hold run semantics only (never filesystem paths), so identical
/// runs into different directories stay bit-identical.
pub fn write_settings_echo(dir: &Path, settings: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("config.txt");
    fs::write(&path, settings).map_err(|e| Error::io(&path, e))
}
