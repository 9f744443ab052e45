use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::LabConfig;
use super::io::write_json;
use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the output directory, with `/` separators.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Provenance of one command run. The resolved config carries every default,
/// so no parameter of the run is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub command: String,
    pub scenario: String,
    pub seed: u64,
    pub config_sha256: String,
    pub modules: BTreeMap<String, String>,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<OutputFile>,
    pub config: LabConfig,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(root: &Path, path: &Path) -> Result<OutputFile> {
    let bytes = std::fs::read(path)?;
    let rel = path.strip_prefix(root).unwrap_or(path);
    Ok(OutputFile {
        path: rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/"),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// Every regular file under `root` except manifests, sorted by path.
pub fn collect_outputs(root: &Path) -> Result<Vec<OutputFile>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else if path.file_name().is_some_and(|n| n != MANIFEST_FILE) {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut paths = Vec::new();
    walk(root, &mut paths)?;
    let mut files = paths
        .iter()
        .map(|p| digest_file(root, p))
        .collect::<Result<Vec<_>>>()?;
    files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(files)
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Writes `manifest.json` into `dir`, listing every other file below it.
pub fn write_manifest(dir: &Path, command: &str, cfg: &LabConfig, started: String) -> Result<RunManifest> {
    let modules = ["kernel", "world_sim", "classifier", "dual_learner", "monitors", "experiment"]
        .iter()
        .map(|m| (m.to_string(), env!("CARGO_PKG_VERSION").to_string()))
        .collect();
    let manifest = RunManifest {
        tool: format!("override-lab {}", env!("CARGO_PKG_VERSION")),
        command: command.to_string(),
        scenario: cfg.scenario.name.clone(),
        seed: cfg.scenario.seed,
        config_sha256: sha256_hex(cfg.to_toml().as_bytes()),
        modules,
        started,
        finished: timestamp(),
        outputs: collect_outputs(dir)?,
        config: cfg.clone(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
