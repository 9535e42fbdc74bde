//! `manifest.toml`: resolved config, overridden fields and content hashes of
//! the inputs.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::data::input_files;

/// Git-style blob hash, `sha256("blob <len>\0" ++ bytes)`.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Serialize)]
struct InputEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunEntry {
    kind: String,
    seed: u64,
    version: String,
    config_file: Option<String>,
    /// Hash over the resolved config and every input hash.
    content_hash: String,
    overrides: Vec<String>,
    inputs: Vec<InputEntry>,
    results: Vec<(String, String)>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    run: RunEntry,
    config: &'a ExperimentConfig,
}

/// Writes `out_dir/manifest.toml`. `results` are extra key/value lines.
pub fn write_manifest(
    cfg: &ExperimentConfig,
    config_file: Option<&Path>,
    results: &[(String, String)],
) -> Result<()> {
    let resolved = cfg.to_toml();
    let mut inputs = Vec::new();
    for p in input_files(&cfg.data) {
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        inputs.push(InputEntry {
            path: p.display().to_string(),
            sha256: blob_hash(&bytes),
        });
    }
    let mut h = Sha256::new();
    h.update(blob_hash(resolved.as_bytes()).as_bytes());
    for i in &inputs {
        h.update(i.sha256.as_bytes());
    }
    let overrides = cfg.overrides();
    for o in &overrides {
        log::info!("config override: {o}");
    }
    let manifest = Manifest {
        run: RunEntry {
            kind: cfg.kind.name().into(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").into(),
            config_file: config_file.map(|p| p.display().to_string()),
            content_hash: hex::encode(h.finalize()),
            overrides,
            inputs,
            results: results.to_vec(),
        },
        config: cfg,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Format {
        path: "manifest.toml".into(),
        detail: e.to_string(),
    })?;
    let path = cfg.out_dir.join("manifest.toml");
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}
