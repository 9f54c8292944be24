use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// Collects a command's outputs in a hidden sibling directory and moves them
/// into place only on [`Staging::commit`]. Dropping without committing
/// removes everything written so far.
pub struct Staging {
    target: PathBuf,
    dir: PathBuf,
    committed: bool,
}

impl Staging {
    pub fn new(target: impl AsRef<Path>) -> Result<Staging> {
        let target = target.as_ref().to_path_buf();
        if target.is_file() {
            return Err(Error::invalid(format!("{} exists and is not a directory", target.display())));
        }
        let name = target
            .file_name()
            .ok_or_else(|| Error::invalid(format!("invalid output directory {}", target.display())))?
            .to_string_lossy()
            .into_owned();
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| Error::file(&parent, e))?;
        let dir = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
        }
        fs::create_dir(&dir).map_err(|e| Error::file(&dir, e))?;
        Ok(Staging {
            target,
            dir,
            committed: false,
        })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, file: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write_text(file, &text)
    }

    pub fn write_text(&self, file: &str, text: &str) -> Result<()> {
        let path = self.path(file);
        fs::write(&path, text).map_err(|e| Error::file(&path, e))
    }

    pub fn commit(mut self) -> Result<PathBuf> {
        if !self.target.exists() {
            fs::rename(&self.dir, &self.target).map_err(|e| Error::file(&self.target, e))?;
        } else {
            for entry in fs::read_dir(&self.dir).map_err(|e| Error::file(&self.dir, e))? {
                let entry = entry?;
                let dest = self.target.join(entry.file_name());
                fs::rename(entry.path(), &dest).map_err(|e| Error::file(&dest, e))?;
            }
            fs::remove_dir(&self.dir).map_err(|e| Error::file(&self.dir, e))?;
        }
        self.committed = true;
        Ok(self.target.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}
