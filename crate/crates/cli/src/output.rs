//! Atomic file output. Everything a command produces is staged first and
//! renamed into place only once the command has succeeded.

use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::Failure;

pub struct Staged {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Staged {
    pub fn new() -> Self {
        Staged { files: Vec::new() }
    }

    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.files.push((path.into(), bytes.into()));
    }

    /// Writes every file to a temporary sibling, then renames them all.
    pub fn commit(self) -> Result<Vec<PathBuf>, Failure> {
        let mut pending = Vec::new();
        for (path, bytes) in &self.files {
            let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
            let mut tmp = NamedTempFile::new_in(dir).map_err(|e| io(dir, e))?;
            tmp.write_all(bytes).map_err(|e| io(path, e))?;
            tmp.as_file().sync_all().map_err(|e| io(path, e))?;
            pending.push((tmp, path));
        }
        for (tmp, path) in pending {
            tmp.persist(path).map_err(|e| io(path, e.error))?;
        }
        Ok(self.files.into_iter().map(|(p, _)| p).collect())
    }
}

pub fn io(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}
