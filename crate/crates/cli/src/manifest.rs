//! Per-run output recording and the JSON run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(bytes: &[u8]) -> Self {
        Self {
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    /// Seconds since the Unix epoch; the only field that differs between
    /// otherwise identical runs.
    pub timestamp: u64,
    pub config: &'a PipelineConfig,
    pub inputs: &'a BTreeMap<String, FileDigest>,
    /// Keyed by path relative to the output directory.
    pub outputs: &'a BTreeMap<String, FileDigest>,
}

/// Reads inputs, writes outputs, and remembers the digests of both.
pub struct Run {
    command: String,
    out_dir: PathBuf,
    inputs: BTreeMap<String, FileDigest>,
    input_paths: Vec<PathBuf>,
    outputs: BTreeMap<String, FileDigest>,
}

impl Run {
    pub fn new(command: &str, out_dir: &Path) -> Self {
        Self {
            command: command.to_owned(),
            out_dir: out_dir.to_path_buf(),
            inputs: BTreeMap::new(),
            input_paths: Vec::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    /// Reads an input file and records its digest.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        if !path.is_file() {
            return Err(CliError::Config(format!("input {} does not exist", path.display())));
        }
        let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.inputs.insert(path.display().to_string(), FileDigest::of(&bytes));
        self.input_paths
            .push(std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf()));
        Ok(bytes)
    }

    /// Writes `bytes` to `out_dir/name`, refusing to overwrite any input.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Data(format!("{}: {e}", self.out_dir.display()));
        std::fs::create_dir_all(&self.out_dir).map_err(io)?;
        let path = self.out_dir.join(name);
        let resolved = std::fs::canonicalize(&self.out_dir).map_err(io)?.join(name);
        if self.input_paths.contains(&resolved) {
            return Err(CliError::Config(format!(
                "output {} would overwrite an input file",
                path.display()
            )));
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.outputs.insert(name.to_owned(), FileDigest::of(bytes));
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("outputs serialize");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, records: &[T]) -> Result<(), CliError> {
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r).expect("records serialize");
            buf.push(b'\n');
        }
        self.write(name, &buf)
    }

    pub fn output_names(&self) -> impl Iterator<Item = &str> {
        self.outputs.keys().map(String::as_str)
    }

    /// Writes `<command>.manifest.json` into the output directory.
    pub fn finish(self, config: &PipelineConfig) -> Result<(), CliError> {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            timestamp,
            config,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::create_dir_all(&self.out_dir).map_err(|e| CliError::Data(e.to_string()))?;
        let path = self.out_dir.join(format!("{}.manifest.json", self.command));
        std::fs::write(&path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}
