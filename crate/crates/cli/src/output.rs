//! Deterministic artifact writing: fixed-precision CSV, manifests, and
//! cleanup of partial outputs when a pipeline stage fails.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

/// Floats are emitted with 9 significant digits in scientific notation;
/// parsing the text recovers the value at that precision on any locale.
pub fn fmt_g9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Output directory that removes everything it created unless committed.
pub struct OutputDir {
    dir: PathBuf,
    created: Vec<PathBuf>,
    committed: bool,
}

impl OutputDir {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::io("output", format!("cannot create {}: {e}", dir.display())))?;
        Ok(OutputDir { dir: dir.to_path_buf(), created: Vec::new(), committed: false })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.path(name);
        fs::write(&path, bytes)
            .map_err(|e| CliError::io("output", format!("cannot write {}: {e}", path.display())))?;
        self.created.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::io("output", format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Plain CSV: one header line, then rows; deterministic order and
    /// formatting are the caller's rows' responsibility.
    pub fn write_csv<I>(&mut self, name: &str, header: &str, rows: I) -> CliResult<PathBuf>
    where
        I: IntoIterator<Item = String>,
    {
        let mut buf = Vec::new();
        writeln!(buf, "{header}").expect("vec write");
        for row in rows {
            writeln!(buf, "{row}").expect("vec write");
        }
        self.write_bytes(name, &buf)
    }

    /// Keep the files; returns their paths.
    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.created)
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if !self.committed {
            for path in &self.created {
                let _ = fs::remove_file(path);
            }
        }
    }
}

/// Manifest written next to every artifact set: enough to re-run the
/// subcommand bit-identically.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    /// SHA-256 of the canonical `key=value` lines above.
    pub config_hash: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub input_hashes: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(subcommand: &str, seed: u64, config: BTreeMap<String, String>) -> Self {
        let canonical: String = config
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        Manifest {
            tool: "mirt".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            seed,
            config_hash: sha256_hex(canonical.as_bytes()),
            config,
            input_hashes: BTreeMap::new(),
        }
    }

    pub fn with_input(mut self, name: &str, bytes: &[u8]) -> Self {
        self.input_hashes.insert(name.to_string(), sha256_hex(bytes));
        self
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
