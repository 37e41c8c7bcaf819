use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance record written next to the outputs of a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<PathBuf>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub seed: u64,
    pub version: String,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    /// Digests every input up front, before the command runs.
    pub fn new(command: &str, config: Option<&Path>, inputs: &[PathBuf], seed: u64) -> Result<Self, CliError> {
        let mut all: Vec<PathBuf> = config.map(Path::to_path_buf).into_iter().collect();
        all.extend(inputs.iter().cloned());
        let inputs = all.into_iter().map(|p| Ok(InputDigest { sha256: sha256_file(&p)?, path: p })).collect::<Result<_, CliError>>()?;
        Ok(RunManifest {
            command: command.to_string(),
            config: config.map(Path::to_path_buf),
            inputs,
            outputs: Vec::new(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Output(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
    }
}
