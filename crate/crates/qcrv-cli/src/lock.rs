//! Single-writer discipline per run directory: a lock file created with
//! `create_new` guards every command that writes; it is removed on drop.
//! Readers need no lock.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

const LOCK_NAME: &str = ".qcrv.lock";

#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<RunLock> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(LOCK_NAME);
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                let _ = writeln!(file, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::State(
                format!(
                    "{} exists: another process is writing to this run directory \
                     (delete the file if that process is gone)",
                    path.display()
                ),
            )),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
