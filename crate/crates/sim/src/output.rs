//! CSV writing and the output manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Version of every CSV schema written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

pub const MANIFEST: &str = "manifest.csv";

/// An output directory that remembers what was written for the manifest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

#[derive(Serialize)]
struct ManifestRow<'a> {
    file: &'a str,
    schema_version: u32,
    bytes: u64,
    sha256: String,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("flushing {name}: {e}"))?;
        self.write_bytes(name, &bytes)
    }

    /// Writes `manifest.csv` listing every file written so far with its
    /// size and SHA-256.
    pub fn write_manifest(&mut self) -> Result<()> {
        let mut rows = Vec::new();
        for f in &self.files {
            let bytes = fs::read(self.path(f))?;
            rows.push((f.clone(), bytes.len() as u64, hex::encode(Sha256::digest(&bytes))));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for (file, bytes, sha256) in &rows {
            w.serialize(ManifestRow { file, schema_version: SCHEMA_VERSION, bytes: *bytes, sha256: sha256.clone() })?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("flushing manifest: {e}"))?;
        fs::write(self.path(MANIFEST), bytes)?;
        Ok(())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_hashes_written_files() {
        let tmp = tempfile::tempdir().unwrap();
        let mut d = OutputDir::create(tmp.path()).unwrap();
        d.write_bytes("a.txt", b"abc").unwrap();
        d.write_bytes("a.txt", b"abc").unwrap();
        d.write_manifest().unwrap();
        let text = fs::read_to_string(tmp.path().join(MANIFEST)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[1],
            "a.txt,1,3,ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
