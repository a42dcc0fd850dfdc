//! Atomic artifact persistence, content digests, and the run manifest.

use std::fs;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cli::OutputFormat;

/// Hex SHA-256 digest of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    file: String,
    sha256: String,
    bytes: u64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_digest: &'a str,
    input_hash: &'a str,
    created_unix: u64,
    outputs: &'a [ManifestEntry],
}

/// Writes run artifacts atomically into one directory and records them
/// in a manifest.
pub struct OutputWriter {
    dir: PathBuf,
    format: OutputFormat,
    command: String,
    config_digest: String,
    input_hash: String,
    entries: Vec<ManifestEntry>,
}

impl OutputWriter {
    /// Creates the output directory and an empty manifest state.
    ///
    /// `config_digest` is the digest of the raw config file bytes (or
    /// "none"), `input_hash` the digest of the resolved configuration.
    pub fn new(
        dir: PathBuf,
        format: OutputFormat,
        command: &str,
        config_digest: String,
        input_hash: String,
    ) -> Result<Self> {
        fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create output dir {}", dir.display()))?;
        Ok(Self {
            dir,
            format,
            command: command.to_string(),
            config_digest,
            input_hash,
            entries: Vec::new(),
        })
    }

    /// Writes one artifact atomically (temp file, then rename) and
    /// records its digest.
    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let mut tmp = tempfile::Builder::new()
            .prefix(".tmp-")
            .tempfile_in(&self.dir)
            .with_context(|| format!("cannot stage {name} in {}", self.dir.display()))?;
        use std::io::Write;
        tmp.write_all(bytes)
            .with_context(|| format!("cannot write staged {name}"))?;
        let target = self.dir.join(name);
        tmp.persist(&target)
            .with_context(|| format!("cannot persist {}", target.display()))?;
        self.entries.push(ManifestEntry {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Writes a pretty-printed JSON artifact.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)
            .with_context(|| format!("cannot serialize {name}"))?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    /// Writes a table of serializable rows, honoring the selected
    /// format: `<stem>.csv` with a header row, or `<stem>.json` as an
    /// array of row objects. Returns the file name used.
    pub fn write_table<T: Serialize>(&mut self, stem: &str, rows: &[T]) -> Result<String> {
        match self.format {
            OutputFormat::Csv => {
                let name = format!("{stem}.csv");
                let mut writer = csv::Writer::from_writer(Vec::new());
                for row in rows {
                    writer
                        .serialize(row)
                        .with_context(|| format!("cannot serialize a {stem} row"))?;
                }
                let bytes = writer
                    .into_inner()
                    .context("cannot flush csv buffer")?;
                self.write_bytes(&name, &bytes)?;
                Ok(name)
            }
            OutputFormat::Json => {
                let name = format!("{stem}.json");
                self.write_json(&name, &rows)?;
                Ok(name)
            }
        }
    }

    /// Writes the manifest and finishes the run. The manifest carries a
    /// timestamp and is itself excluded from determinism comparisons;
    /// every listed output digest is reproducible.
    pub fn finish(self) -> Result<()> {
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = Manifest {
            command: &self.command,
            config_digest: &self.config_digest,
            input_hash: &self.input_hash,
            created_unix,
            outputs: &self.entries,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)
            .context("cannot serialize the manifest")?;
        bytes.push(b'\n');
        let mut tmp = tempfile::Builder::new()
            .prefix(".tmp-")
            .tempfile_in(&self.dir)
            .context("cannot stage the manifest")?;
        use std::io::Write;
        tmp.write_all(&bytes).context("cannot write the manifest")?;
        tmp.persist(self.dir.join("manifest.json"))
            .context("cannot persist the manifest")?;
        Ok(())
    }
}
