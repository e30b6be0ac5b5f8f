use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{io_error, CliError};

/// Provenance record written next to every command's outputs.
#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_hash: String,
    config: &'a RunConfig,
    files: Vec<String>,
}

pub fn write_manifest(
    path: &Path,
    command: &str,
    seed: u64,
    config: &RunConfig,
    files: &[PathBuf],
) -> Result<(), CliError> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config_hash: config.hash(),
        config,
        files: files
            .iter()
            .map(|p| p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(path, json + "\n").map_err(|e| io_error(path, e))
}

/// Create `dir` if needed and check that it is a writable directory.
pub fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let probe = dir.join(".shopper-write-test");
    std::fs::write(&probe, b"").map_err(|e| io_error(dir, e))?;
    let _ = std::fs::remove_file(probe);
    Ok(())
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| io_error(path, e))
}

pub fn finish_csv(mut writer: csv::Writer<std::fs::File>, path: &Path) -> Result<(), CliError> {
    writer.flush().map_err(|e| io_error(path, e))
}

/// Format a float for CSV output, spelling out non-finite values.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x}")
    }
}
