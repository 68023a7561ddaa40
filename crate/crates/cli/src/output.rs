//! Temp-then-rename output staging: files are written into a hidden
//! directory next to their destination and moved into place on commit, so
//! failed runs leave nothing half-written behind.

use std::collections::BTreeSet;
use std::path::{Component, Path, PathBuf};

use scenelift_core::Error;
use tempfile::TempDir;

use crate::error::CliResult;

pub struct Staging {
    dir: TempDir,
    target: PathBuf,
    top_level: BTreeSet<PathBuf>,
}

impl Staging {
    pub fn new(target: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(target).map_err(|e| Error::io(target, e))?;
        let dir = tempfile::Builder::new()
            .prefix(".staging-")
            .tempdir_in(target)
            .map_err(|e| Error::io(target, e))?;
        Ok(Self {
            dir,
            target: target.to_path_buf(),
            top_level: BTreeSet::new(),
        })
    }

    /// Stages `bytes` at `rel` (relative to the target directory).
    pub fn write(&mut self, rel: impl AsRef<Path>, bytes: &[u8]) -> CliResult<()> {
        let rel = rel.as_ref();
        let Some(Component::Normal(first)) = rel.components().next() else {
            return Err(Error::InvalidArgument(format!("output path `{}` must be relative", rel.display())).into());
        };
        if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
            return Err(Error::InvalidArgument(format!("output path `{}` must not leave the output dir", rel.display())).into());
        }
        let path = self.dir.path().join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.top_level.insert(PathBuf::from(first));
        Ok(())
    }

    /// Moves every staged top-level entry into the target, replacing
    /// previous outputs of the same name.
    pub fn commit(self) -> CliResult<Vec<PathBuf>> {
        let mut out = Vec::with_capacity(self.top_level.len());
        for name in &self.top_level {
            let from = self.dir.path().join(name);
            let to = self.target.join(name);
            if to.is_dir() {
                std::fs::remove_dir_all(&to).map_err(|e| Error::io(&to, e))?;
            }
            std::fs::rename(&from, &to).map_err(|e| Error::io(&to, e))?;
            out.push(to);
        }
        Ok(out)
    }
}

/// Single-file convenience wrapper.
pub fn write_atomic(target_dir: &Path, rel: impl AsRef<Path>, bytes: &[u8]) -> CliResult<PathBuf> {
    let mut s = Staging::new(target_dir)?;
    s.write(rel, bytes)?;
    Ok(s.commit()?.remove(0))
}
