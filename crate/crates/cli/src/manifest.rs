//! Run manifests: every command writes a `manifest.json` describing its
//! inputs (dataset path plus content hash), configuration, and the artifact
//! files it produced, so a run can be reproduced from the manifest alone.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fatiguefit_core::likelihood::ModelSpec;
use fatiguefit_core::mle::{FitConfig, FittedModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command: the exact argv, the dataset it read
/// (by path and content hash), the model and fit configuration, and the
/// artifact files written. The manifest itself is not in `outputs`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub args: Vec<String>,
    pub dataset: DatasetRef,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<ModelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_config: Option<FitConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, dataset: DatasetRef) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            dataset,
            spec: None,
            fit_config: None,
            seed: None,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join("manifest.json");
        let mut body = serde_json::to_string_pretty(self)?;
        body.push('\n');
        fs::write(&path, body)?;
        Ok(())
    }
}

/// A fitted model as written by `fit` and read back by `icompare`, `curves`,
/// and `survival`. Carries the dataset hash so downstream commands can check
/// that fits being combined came from the same data.
#[derive(Debug, Serialize, Deserialize)]
pub struct FitArtifact {
    pub tool_version: String,
    pub model: String,
    pub dataset: DatasetRef,
    pub fit: FittedModel,
}

pub fn sha256_hex(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path)
        .map_err(|e| anyhow::anyhow!("cannot read {} for hashing: {e}", path.display()))?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write;
        write!(hex, "{b:02x}").expect("writing to a String cannot fail");
    }
    Ok(hex)
}

pub fn dataset_ref(path: &Path) -> anyhow::Result<DatasetRef> {
    Ok(DatasetRef {
        path: path.display().to_string(),
        sha256: sha256_hex(path)?,
    })
}
