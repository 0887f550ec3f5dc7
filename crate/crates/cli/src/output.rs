//! Single write-through collector for run artifacts.
//!
//! Every file a run produces goes through one collector, so the set of output
//! paths and their order are a deterministic function of the run itself —
//! independent of how the work was scheduled — and the CLI can print the full
//! list on completion.

use std::path::{Path, PathBuf};

use crate::error::{io_error, Result};

/// Writes files under one run directory and remembers what it wrote.
#[derive(Debug)]
pub struct OutputCollector {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputCollector {
    /// Create (or reuse) the run directory.
    pub fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| io_error(root, e))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Write one artifact at a path relative to the run directory, creating
    /// parent directories as needed.
    pub fn write(&mut self, relative: &str, contents: &str) -> Result<PathBuf> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        self.written.push(relative.to_string());
        Ok(path)
    }

    /// Relative paths of everything written, in write order.
    pub fn relative_paths(&self) -> &[String] {
        &self.written
    }

    /// Absolute-ish paths (root-joined), in write order.
    pub fn full_paths(&self) -> Vec<PathBuf> {
        self.written.iter().map(|rel| self.root.join(rel)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_are_recorded_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputCollector::new(dir.path()).unwrap();
        out.write("b/two.csv", "2").unwrap();
        out.write("one.csv", "1").unwrap();
        assert_eq!(out.relative_paths(), ["b/two.csv", "one.csv"]);
        assert_eq!(std::fs::read_to_string(dir.path().join("b/two.csv")).unwrap(), "2");
        assert_eq!(out.full_paths()[1], dir.path().join("one.csv"));
    }
}
