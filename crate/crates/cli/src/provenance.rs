//! Content hashes, read logging and the provenance block carried by every
//! artifact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

/// What produced an artifact: the command, the effective configuration
/// hash, the seed and every file read while producing it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub inputs: Vec<InputRecord>,
}

impl Provenance {
    pub fn read_hash(&self, sha256: &str) -> bool {
        self.inputs.iter().any(|r| r.sha256 == sha256)
    }
}

/// All input files of a command go through this log, so the provenance
/// block lists exactly what was read.
#[derive(Debug, Default)]
pub struct ReadLog {
    records: Vec<InputRecord>,
}

impl ReadLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let record = InputRecord { path: path.display().to_string(), sha256: sha256_hex(&bytes) };
        if !self.records.contains(&record) {
            self.records.push(record);
        }
        Ok(bytes)
    }

    pub fn read_to_string(&mut self, path: &Path) -> Result<String> {
        let bytes = self.read(path)?;
        String::from_utf8(bytes)
            .map_err(|_| CliError::Format { path: path.to_path_buf(), reason: "not valid UTF-8".into() })
    }

    pub fn records(&self) -> &[InputRecord] {
        &self.records
    }

    pub fn provenance(&self, command: &str, config_sha256: &str, seed: u64) -> Provenance {
        Provenance {
            command: command.into(),
            config_sha256: config_sha256.into(),
            seed,
            inputs: self.records.clone(),
        }
    }
}
