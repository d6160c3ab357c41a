//! Run manifests. Every stage writes `manifest.json` next to its artifacts;
//! the manifest records what went in (content hashes, upstream run ids,
//! seeds, configs) and the hash of every file that came out.
//!
//! The run id hashes only the inputs and settings — not paths, not the
//! clock — so identical reruns get identical ids, and JSON artifacts can
//! embed the id before the outputs exist.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use laqg_core::{DecodeSettings, ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{mismatch, usage};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub stage: String,
    pub tool_version: String,
    pub created_unix: u64,
    #[serde(default)]
    pub inputs: BTreeMap<String, FileRef>,
    /// Role → run id of the manifests this run consumed.
    #[serde(default)]
    pub upstream: BTreeMap<String, String>,
    #[serde(default)]
    pub seeds: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoding: Option<DecodeSettings>,
    #[serde(default)]
    pub settings: serde_json::Value,
    /// File name (relative to the run directory) → hash.
    #[serde(default)]
    pub outputs: BTreeMap<String, FileRef>,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let mut file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(hasher.finalize()))
}

impl RunManifest {
    pub fn new(stage: &str) -> Self {
        RunManifest {
            run_id: String::new(),
            stage: stage.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            created_unix: 0,
            inputs: BTreeMap::new(),
            upstream: BTreeMap::new(),
            seeds: BTreeMap::new(),
            vocab_hash: None,
            model: None,
            training: None,
            decoding: None,
            settings: serde_json::Value::Null,
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> anyhow::Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.insert(role.to_string(), FileRef { path: path.display().to_string(), sha256 });
        Ok(())
    }

    /// Fixes the run id from everything recorded so far except paths.
    pub fn seal(&mut self) -> &str {
        let inputs: BTreeMap<&String, &String> = self.inputs.iter().map(|(k, f)| (k, &f.sha256)).collect();
        let key = serde_json::json!({
            "stage": self.stage,
            "tool_version": self.tool_version,
            "inputs": inputs,
            "upstream": self.upstream,
            "seeds": self.seeds,
            "model": self.model,
            "training": self.training,
            "decoding": self.decoding,
            "settings": self.settings,
        });
        let digest = hex::encode(Sha256::digest(key.to_string().as_bytes()));
        self.run_id = format!("{}-{}", self.stage, &digest[..12]);
        &self.run_id
    }

    /// Hashes the named outputs in `dir` and writes the manifest there.
    pub fn finish(&mut self, dir: &Path, outputs: &[&str]) -> anyhow::Result<()> {
        if self.run_id.is_empty() {
            self.seal();
        }
        for name in outputs {
            let sha256 = sha256_file(&dir.join(name))?;
            self.outputs.insert(name.to_string(), FileRef { path: name.to_string(), sha256 });
        }
        self.created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let text = serde_json::to_string_pretty(self)? + "\n";
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(dir: &Path) -> anyhow::Result<RunManifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| usage(format!("{} is not a run directory ({}: {e})", dir.display(), path.display())))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Loads and checks that every recorded output is still what was written.
    pub fn load_verified(dir: &Path, stage: &str) -> anyhow::Result<RunManifest> {
        let m = Self::load(dir)?;
        if m.stage != stage {
            return Err(usage(format!("{} holds a {} run, expected {stage}", dir.display(), m.stage)));
        }
        for (name, f) in &m.outputs {
            let actual = sha256_file(&dir.join(name))?;
            if actual != f.sha256 {
                return Err(mismatch(format!(
                    "{} changed after run {} wrote it (sha256 {} recorded, {} now)",
                    dir.join(name).display(),
                    m.run_id,
                    &f.sha256[..12],
                    &actual[..12]
                )));
            }
        }
        Ok(m)
    }

    pub fn setting(&self, key: &str) -> Option<&serde_json::Value> {
        self.settings.get(key)
    }
}

/// A path argument that may name a run directory or a file inside one.
pub fn resolve(path: &Path, default_file: &str) -> (PathBuf, Option<PathBuf>) {
    if path.is_dir() {
        (path.join(default_file), Some(path.to_path_buf()))
    } else {
        let parent = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let dir = parent.join(MANIFEST_FILE).is_file().then_some(parent);
        (path.to_path_buf(), dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_id_ignores_paths_and_time_but_not_content() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.txt");
        let b = dir.path().join("b.txt");
        std::fs::write(&a, "same").unwrap();
        std::fs::write(&b, "same").unwrap();
        let id = |p: &Path, seed: u64| {
            let mut m = RunManifest::new("train");
            m.input("data", p).unwrap();
            m.seeds.insert("train".into(), seed);
            m.seal().to_string()
        };
        assert_eq!(id(&a, 1), id(&b, 1));
        assert_ne!(id(&a, 1), id(&a, 2));
        std::fs::write(&b, "different").unwrap();
        assert_ne!(id(&a, 1), id(&b, 1));
    }

    #[test]
    fn tampered_outputs_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("out.jsonl"), "{}\n").unwrap();
        let mut m = RunManifest::new("generate");
        m.finish(dir.path(), &["out.jsonl"]).unwrap();
        let back = RunManifest::load_verified(dir.path(), "generate").unwrap();
        assert_eq!(back.run_id, m.run_id);
        assert!(RunManifest::load_verified(dir.path(), "train").is_err());
        std::fs::write(dir.path().join("out.jsonl"), "{\"x\":1}\n").unwrap();
        let err = RunManifest::load_verified(dir.path(), "generate").unwrap_err();
        assert_eq!(crate::error::exit_code(&err), crate::error::EXIT_DATA);
    }
}
