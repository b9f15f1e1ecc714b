//! Reproducibility manifests: every flag, the seed, and SHA-256 hashes of
//! the files a run read and wrote. No timestamps, so identical runs give
//! byte-identical manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "run.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub flags: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub struct Recorder {
    manifest: RunManifest,
}

fn digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("{}: cannot read for hashing", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// The file itself plus its `.raw` payload when one exists.
fn with_payload(path: &Path) -> Vec<PathBuf> {
    let mut out = vec![path.to_path_buf()];
    let raw = pcdiff_core::volume::payload_path(path);
    if raw != path && raw.exists() {
        out.push(raw);
    }
    out
}

impl Recorder {
    pub fn new(command: &str, flags: serde_json::Value, seed: Option<u64>) -> Self {
        Recorder {
            manifest: RunManifest {
                tool: "pcdiff",
                version: env!("CARGO_PKG_VERSION"),
                command: command.into(),
                flags,
                seed,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        for p in with_payload(path) {
            self.manifest.inputs.insert(p.display().to_string(), digest(&p)?);
        }
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        for p in with_payload(path) {
            self.manifest.outputs.insert(p.display().to_string(), digest(&p)?);
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(path, json + "\n").with_context(|| format!("{}: cannot write manifest", path.display()))
    }
}

/// Where the manifest of a run writing `output` goes.
pub fn manifest_path(output: &Path) -> PathBuf {
    if output.is_dir() {
        output.join(MANIFEST_NAME)
    } else {
        output.with_extension(MANIFEST_NAME)
    }
}
