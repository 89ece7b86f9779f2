use std::fs;
use std::path::Path;

use mosaic_core::{EngineConfig, RunReport};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> CliResult<FileDigest> {
        let data = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Ok(FileDigest {
            path: path.display().to_string(),
            bytes: data.len() as u64,
            sha256: hex::encode(Sha256::digest(&data)),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct Counts {
    pub input_records: usize,
    pub dropped_records: usize,
    pub output_samples: usize,
    pub member_slots: usize,
    pub oversize: usize,
}

/// Provenance record written next to every build.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub rng: String,
    pub config: EngineConfig,
    pub registry: Option<String>,
    pub input: FileDigest,
    pub output: FileDigest,
    pub counts: Counts,
    pub elapsed_ms: u128,
}

impl Manifest {
    pub fn new(
        config: &EngineConfig,
        registry: Option<&Path>,
        input: FileDigest,
        output: FileDigest,
        report: &RunReport,
        elapsed_ms: u128,
    ) -> Manifest {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            rng: config.rng.clone(),
            config: config.clone(),
            registry: registry.map(|p| p.display().to_string()),
            input,
            output,
            counts: Counts {
                input_records: report.input_records,
                dropped_records: report.dropped_records,
                output_samples: report.output_samples,
                member_slots: report.member_slots,
                oversize: report.oversize,
            },
            elapsed_ms,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
