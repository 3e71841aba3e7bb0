//! Output directory of one run: config snapshot, artifacts and a manifest
//! listing every artifact with its SHA-256.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thinrod_core::config::sha256_hex;
use thinrod_core::error::{Error, Result};
use thinrod_core::RunConfig;

pub struct RunDir {
    root: PathBuf,
    command: String,
    config_hash: String,
    files: Vec<(String, String)>,
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    path: &'a str,
    sha256: &'a str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    schema_version: u32,
    config_hash: &'a str,
    files: Vec<ManifestEntry<'a>>,
}

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

impl RunDir {
    /// Creates the directory and writes `config_snapshot.toml`.
    pub fn create(root: &Path, command: &str, config: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| io(root, e))?;
        let mut dir = RunDir {
            root: root.to_path_buf(),
            command: command.to_string(),
            config_hash: config.hash()?,
            files: Vec::new(),
        };
        dir.write("config_snapshot.toml", config.to_toml_string()?.as_bytes())?;
        Ok(dir)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        }
        std::fs::write(&p, bytes).map_err(|e| io(&p, e))?;
        self.files.push((rel.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Serialization(e.to_string()))?;
        s.push('\n');
        self.write(rel, s.as_bytes())
    }

    /// Records a file written by someone else.
    pub fn record(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| io(path, e))?;
        let rel = path
            .strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        self.files.push((rel, sha256_hex(&bytes)));
        Ok(())
    }

    /// Writes `manifest.json`. No timestamps, so reruns give identical bytes.
    pub fn finish(mut self) -> Result<()> {
        self.files.sort();
        self.files.dedup();
        let manifest = Manifest {
            tool: "thinrod",
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            schema_version: thinrod_core::config::SCHEMA_VERSION,
            config_hash: &self.config_hash,
            files: self
                .files
                .iter()
                .map(|(p, h)| ManifestEntry { path: p, sha256: h })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Serialization(e.to_string()))?;
        s.push('\n');
        let p = self.root.join("manifest.json");
        std::fs::write(&p, s).map_err(|e| io(&p, e))
    }
}
