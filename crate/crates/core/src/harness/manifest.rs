use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::persist::{self, Manifest};

/// Index of everything a run wrote, with content hashes.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    /// `(name, path relative to the run directory, sha256)`.
    pub artifacts: Vec<(String, PathBuf, String)>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            config_hash: cfg.config_hash()?,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: now(),
            finished_unix: None,
            artifacts: Vec::new(),
        })
    }

    pub fn add_artifact(&mut self, name: &str, root: &Path, path: &Path) -> Result<()> {
        let rel = path.strip_prefix(root).unwrap_or(path).to_path_buf();
        let hash = persist::file_sha256(path)?;
        self.artifacts.retain(|(n, _, _)| n != name);
        self.artifacts.push((name.to_string(), rel, hash));
        Ok(())
    }

    pub fn finish(&mut self, path: &Path) -> Result<()> {
        self.finished_unix = Some(now());
        self.write(path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut m = Manifest::new("run-v1");
        m.set("config_hash", &self.config_hash);
        m.set("tool_version", &self.tool_version);
        m.set("started_unix", self.started_unix);
        if let Some(t) = self.finished_unix {
            m.set("finished_unix", t);
        }
        for (name, rel, hash) in &self.artifacts {
            m.set(&format!("artifact.{name}.path"), rel.display());
            m.set(&format!("artifact.{name}.sha256"), hash);
        }
        m.write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let m = Manifest::read(path)?;
        m.expect_format("run-v1")?;
        let mut artifacts = Vec::new();
        for (key, value) in m.entries() {
            if let Some(name) = key.strip_prefix("artifact.").and_then(|k| k.strip_suffix(".path")) {
                let hash = m.get(&format!("artifact.{name}.sha256"))?;
                artifacts.push((name.to_string(), PathBuf::from(value), hash.to_string()));
            }
        }
        Ok(Self {
            config_hash: m.get("config_hash")?.to_string(),
            tool_version: m.get("tool_version")?.to_string(),
            started_unix: m.parse("started_unix")?,
            finished_unix: m.get_opt("finished_unix").map(str::parse).transpose().map_err(|_| Error::Format {
                path: path.to_path_buf(),
                reason: "bad finished_unix".into(),
            })?,
            artifacts,
        })
    }

    /// Checks that every recorded artifact under `root` still has its recorded hash.
    pub fn verify(&self, root: &Path) -> Result<()> {
        for (name, rel, hash) in &self.artifacts {
            let path = root.join(rel);
            let actual = persist::file_sha256(&path)?;
            if &actual != hash {
                return Err(Error::Format {
                    path,
                    reason: format!("artifact `{name}` hash changed"),
                });
            }
        }
        Ok(())
    }
}
