//! Hashing, the run-manifest, and the exit-code mapping.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mdrr_core::{Error, RunConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Returned when a command finished but some inputs failed.
#[derive(Debug)]
pub struct PartialFailure {
    pub failed: usize,
}

impl fmt::Display for PartialFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} input(s) failed", self.failed)
    }
}

impl std::error::Error for PartialFailure {}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<PartialFailure>().is_some() {
        return EXIT_PARTIAL;
    }
    for cause in err.chain() {
        if let Some(Error::Divergence { .. } | Error::NonFiniteGradient { .. }) = cause.downcast_ref::<Error>() {
            return EXIT_NUMERIC;
        }
    }
    EXIT_USAGE
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_bytes(&bytes))
}

pub fn sha256_json<T: Serialize>(value: &T) -> String {
    sha256_bytes(&serde_json::to_vec(value).expect("serializable value"))
}

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: RunConfig,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        // where outputs go does not change what is computed
        let hashed = RunConfig {
            output_dir: PathBuf::new(),
            ..config.clone()
        };
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config_sha256: sha256_json(&hashed),
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let h = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), h);
        Ok(())
    }

    pub fn input_hash(&mut self, name: impl Into<String>, hash: String) {
        self.inputs.insert(name.into(), hash);
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    /// Written as `<out>/runs/<command>.json`.
    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let dir = out.join("runs");
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(format!("{}.json", self.command));
        fs::write(&path, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
