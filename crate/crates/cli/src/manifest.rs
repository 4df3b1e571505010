//! Run manifests and JSON summaries.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Outcome of one built-in assertion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub bound: f64,
}

impl Assertion {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            pass: value <= bound,
            value,
            bound,
        }
    }

    pub fn holds(name: impl Into<String>, pass: bool, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            pass,
            value,
            bound,
        }
    }
}

/// One file written by a run, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub kind: String,
    /// Data rows, header excluded.
    pub rows: usize,
}

/// The JSON summary written next to the CSV outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub params: Value,
    pub metrics: Value,
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the config file bytes, lowercase hex.
    pub config_hash: String,
    pub code_version: String,
    /// Unix seconds.
    pub started: u64,
    pub finished: u64,
    pub experiment: String,
    pub output_dir: PathBuf,
    pub files: Vec<OutputFile>,
    pub assertions: Vec<Assertion>,
    pub failures: Vec<String>,
    pub params: Value,
}

impl RunManifest {
    pub fn success(&self) -> bool {
        self.failures.is_empty() && self.assertions.iter().all(|a| a.pass)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut de = serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(&mut de)
            .map_err(|e| CliError::Config(format!("manifest {} at `{}`: {}", path.display(), e.path(), e.inner())))
    }

    /// Every listed file exists and is non-empty.
    pub fn verify_files(&self) -> Result<(), CliError> {
        for f in &self.files {
            let p = self.output_dir.join(&f.path);
            match std::fs::metadata(&p) {
                Ok(m) if m.len() > 0 => {}
                _ => return Err(CliError::Runtime(format!("output {} is missing or empty", p.display()))),
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(&path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_of_known_input() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn success_needs_all_assertions() {
        let mut m = RunManifest {
            config_hash: String::new(),
            code_version: "0".into(),
            started: 0,
            finished: 0,
            experiment: "period".into(),
            output_dir: PathBuf::new(),
            files: vec![],
            assertions: vec![Assertion::at_most("x", 1.0, 2.0)],
            failures: vec![],
            params: Value::Null,
        };
        assert!(m.success());
        m.assertions.push(Assertion::at_most("y", 3.0, 2.0));
        assert!(!m.success());
    }
}
