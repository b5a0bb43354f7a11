//! Per-stage run manifests: what ran, with which config and seed, and the
//! digests of everything read and written.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::formats::{self, FormatError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the run root when the file lives under it.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub eeprec_version: String,
    pub eeprec_core_version: String,
    pub config_version: String,
    pub seed: u64,
    pub stage_seed: u64,
    pub config_sha256: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// The complete resolved configuration.
    pub config: PipelineConfig,
}

pub fn file_sha256(path: &Path) -> Result<String, FormatError> {
    let mut hasher = Sha256::new();
    let mut f = formats::open(path)?;
    std::io::copy(&mut f, &mut hasher)?;
    Ok(format!("{:x}", hasher.finalize()))
}

fn digest(root: &Path, path: &Path) -> Result<FileDigest, FormatError> {
    let shown = path.strip_prefix(root).unwrap_or(path);
    Ok(FileDigest {
        path: shown.to_string_lossy().replace('\\', "/"),
        sha256: file_sha256(path)?,
    })
}

impl Manifest {
    pub fn new(
        stage: &str,
        cfg: &PipelineConfig,
        stage_seed: u64,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
    ) -> Result<Self, FormatError> {
        let root = Path::new(&cfg.paths.root);
        let list = |files: &[PathBuf]| files.iter().map(|p| digest(root, p)).collect::<Result<Vec<_>, _>>();
        Ok(Self {
            stage: stage.to_string(),
            eeprec_version: env!("CARGO_PKG_VERSION").to_string(),
            eeprec_core_version: eeprec_core::VERSION.to_string(),
            config_version: cfg.version.clone(),
            seed: cfg.seed,
            stage_seed,
            config_sha256: cfg.sha256(),
            inputs: list(inputs)?,
            outputs: list(outputs)?,
            config: cfg.clone(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), FormatError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| FormatError::Parse(e.to_string()))?;
        text.push('\n');
        formats::write_bytes(path, text.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self, FormatError> {
        let bytes = formats::read_bytes(path)?;
        serde_json::from_slice(&bytes).map_err(|e| FormatError::Parse(format!("{}: {e}", path.display())))
    }
}
