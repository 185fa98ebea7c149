//! Experiment harness behind the `fedmsc` binary.
//!
//! Every command writes into a staging directory next to its target and
//! renames it into place only after all files are written, so an output
//! directory is either complete or absent.

pub mod commands;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::TempDir;

/// Command failure, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config, unreadable inputs. Exit code 1.
    Usage(String),
    /// Failure while computing. Exit code 2.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn usage(e: impl fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }

    pub fn runtime(e: impl fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Output directory assembled off to the side and moved into place on
/// [`StagedDir::commit`]. Dropping it uncommitted deletes everything written.
pub struct StagedDir {
    target: PathBuf,
    staging: TempDir,
}

impl StagedDir {
    /// Refuses targets that exist and are not empty directories.
    pub fn create(target: impl AsRef<Path>) -> CliResult<Self> {
        let target = target.as_ref().to_path_buf();
        if target.exists() {
            let empty = target.is_dir()
                && fs::read_dir(&target)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", target.display())))?
                    .next()
                    .is_none();
            if !empty {
                return Err(CliError::Usage(format!(
                    "output directory {} already exists and is not empty",
                    target.display()
                )));
            }
        }
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)
            .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", parent.display())))?;
        let staging = tempfile::Builder::new()
            .prefix(".fedmsc-staging-")
            .tempdir_in(&parent)
            .map_err(|e| CliError::Usage(format!("cannot stage in {}: {e}", parent.display())))?;
        Ok(Self { target, staging })
    }

    pub fn path(&self) -> &Path {
        self.staging.path()
    }

    pub fn target(&self) -> &Path {
        &self.target
    }

    pub fn commit(self) -> CliResult<PathBuf> {
        if self.target.exists() {
            fs::remove_dir(&self.target).map_err(|e| {
                CliError::Runtime(format!("cannot replace {}: {e}", self.target.display()))
            })?;
        }
        let staged = self.staging.keep();
        fs::rename(&staged, &self.target).map_err(|e| {
            let _ = fs::remove_dir_all(&staged);
            CliError::Runtime(format!(
                "cannot move output to {}: {e}",
                self.target.display()
            ))
        })?;
        Ok(self.target)
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut file = fs::File::create(path).map_err(io)?;
    for row in rows {
        let line = serde_json::to_string(row).map_err(CliError::runtime)?;
        writeln!(file, "{line}").map_err(io)?;
    }
    Ok(())
}
