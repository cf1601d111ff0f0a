//! Output directory handling: lock file, result cache and run manifests.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{RunConfig, CODE_VERSION};

pub const DEFAULT_OUT: &str = "hardylab-out";
pub const LOCK_NAME: &str = ".hardylab.lock";
pub const CSV_NAME: &str = "results.csv";
pub const MANIFEST_NAME: &str = "manifest.json";

/// `--out`, then `HARDYLAB_OUT`, then [`DEFAULT_OUT`].
pub fn resolve_out(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("HARDYLAB_OUT").filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Exclusive hold on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        let path = dir.join(LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                bail!("{} is locked by another run (delete {} if it is stale)", dir.display(), path.display())
            }
            Err(e) => Err(e).with_context(|| format!("cannot create {}", path.display())),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub code_version: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub csv: String,
    pub rows: usize,
    pub columns: Vec<String>,
    pub wall_seconds: f64,
    pub warnings: Vec<String>,
    /// Full structured result of the operation.
    pub result: Value,
}

/// Directory of one run inside the output directory.
pub fn run_dir(out: &Path, cfg: &RunConfig) -> PathBuf {
    out.join(format!("{}-{}", cfg.subcommand, &cfg.hash()[..16]))
}

/// A stored run whose version and hash match `cfg`, if any.
pub fn lookup(dir: &Path, cfg: &RunConfig) -> Option<Manifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_NAME)).ok()?;
    let m: Manifest = serde_json::from_str(&text).ok()?;
    let fresh = m.code_version == CODE_VERSION && m.config_hash == cfg.hash() && dir.join(&m.csv).is_file();
    fresh.then_some(m)
}

pub fn write_run(dir: &Path, manifest: &Manifest, csv: &[u8]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(&manifest.csv), csv)?;
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_NAME), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Task;

    #[test]
    fn manifest_round_trips() {
        let m = Manifest {
            code_version: CODE_VERSION.into(),
            config_hash: "00".into(),
            config: RunConfig::defaults(Task::Sweep),
            csv: CSV_NAME.into(),
            rows: 2,
            columns: vec!["lambda".into(), "mu".into()],
            wall_seconds: 0.25,
            warnings: vec![],
            result: serde_json::json!({"x": [1.0, 2.5]}),
        };
        let text = serde_json::to_string_pretty(&m).unwrap();
        let back: Manifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);
    }

    #[test]
    fn lock_is_exclusive() {
        let d = tempfile::tempdir().unwrap();
        let l = DirLock::acquire(d.path()).unwrap();
        assert!(DirLock::acquire(d.path()).is_err());
        drop(l);
        assert!(DirLock::acquire(d.path()).is_ok());
    }
}
