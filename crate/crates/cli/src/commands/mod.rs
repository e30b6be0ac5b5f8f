pub mod eval;
pub mod export;
pub mod fit;
pub mod metrics;
pub mod simulate;

use std::path::{Path, PathBuf};

use shopper::checkpoint::Checkpoint;
use shopper::exec::{with_threads, Execution};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::Common;

/// Configuration with the command-line seed applied.
pub fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::load(common.config.as_deref())?;
    config.apply_seed(common.seed);
    Ok(config)
}

pub fn execution(common: &Common) -> Result<Execution, CliError> {
    Ok(with_threads(common.threads)?)
}

/// A path from its flag, falling back to the configuration.
pub fn resolve(flag: Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| CliError::Input(format!("no {name} given (flag --{name} or [paths] {})", name.replace('-', "_"))))
}

pub fn open_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    if !path.is_file() {
        return Err(CliError::Input(format!("checkpoint {} does not exist", path.display())));
    }
    Ok(Checkpoint::load(path)?)
}

/// Output directory: the flag, then the configuration, then `fallback`.
pub fn out_dir(flag: Option<PathBuf>, config: &RunConfig, fallback: &Path) -> PathBuf {
    flag.or_else(|| config.paths.out.clone()).unwrap_or_else(|| fallback.to_path_buf())
}
