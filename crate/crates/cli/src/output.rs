//! Output files. Every CSV and report starts with a `# config_hash:` line,
//! which the CSV readers skip as a comment.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const HASH_PREFIX: &str = "# config_hash: ";

/// Writes files under the run directory and remembers their relative paths.
pub struct OutDir {
    root: PathBuf,
    hash: String,
    written: Vec<String>,
}

impl OutDir {
    pub fn new(root: &Path, hash: &str) -> Self {
        Self {
            root: root.to_path_buf(),
            hash: hash.to_string(),
            written: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Relative paths written since the last call.
    pub fn take_written(&mut self) -> Vec<String> {
        std::mem::take(&mut self.written)
    }

    /// Hash line, then whatever `body` writes.
    pub fn write_with<F>(&mut self, rel: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> washgap::Result<()>,
    {
        let mut buf = format!("{HASH_PREFIX}{}\n", self.hash).into_bytes();
        body(&mut buf)?;
        self.write_raw(rel, &buf)
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<()> {
        let buf = format!("{HASH_PREFIX}{}\n{text}", self.hash);
        self.write_raw(rel, buf.as_bytes())
    }

    /// No hash line; for non-CSV bundle files such as corpus documents.
    pub fn write_raw(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let p = self.root.join(rel);
        if let Some(d) = p.parent() {
            fs::create_dir_all(d).map_err(|e| CliError::Io(format!("{}: {e}", d.display())))?;
        }
        fs::write(&p, bytes).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        self.written.push(rel.to_string());
        Ok(())
    }

    /// Open a file a previous stage wrote.
    pub fn open(&self, rel: &str) -> Result<fs::File> {
        let p = self.root.join(rel);
        fs::File::open(&p).map_err(|_| CliError::MissingInput(rel.to_string()))
    }

    pub fn read_table(&self, rel: &str) -> Result<washgap::table::Table> {
        Ok(washgap::table::Table::read_csv(self.open(rel)?)?)
    }
}

/// SHA-256 of a file, or of a directory as sorted `name\0bytes` records.
pub fn digest(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut names: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        names.sort();
        for p in names {
            h.update(p.file_name().unwrap_or_default().to_string_lossy().as_bytes());
            h.update([0]);
            h.update(fs::read(&p)?);
        }
    } else {
        let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        h.update(bytes);
    }
    Ok(hex::encode(h.finalize()))
}
