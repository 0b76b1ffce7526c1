//! CSV tables and plain-text summaries under a reports directory.

use std::fs;
use std::path::{Path, PathBuf};

pub struct Reports {
    dir: PathBuf,
}

impl Reports {
    pub fn new(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Reports {
            dir: dir.as_ref().to_path_buf(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `name` inside the reports directory and returns its path.
    pub fn write(&self, name: &str, contents: &str) -> std::io::Result<PathBuf> {
        let p = self.dir.join(name);
        fs::write(&p, contents)?;
        Ok(p)
    }
}
