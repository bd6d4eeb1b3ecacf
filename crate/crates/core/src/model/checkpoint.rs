use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::Model;
use super::train::TrainLog;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: u32 = 1;

/// Versioned on-disk model: configuration, parameters, batch-norm statistics and
/// the hash of the feature cache it was trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub version: String,
    pub feature_hash: String,
    /// Hash of the experiment config that produced the checkpoint, when known.
    #[serde(default)]
    pub config_hash: String,
    pub model: Model,
    pub log: TrainLog,
}

impl Checkpoint {
    pub fn new(model: Model, log: TrainLog, feature_hash: impl Into<String>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT,
            version: crate::ARTIFACT_VERSION.to_string(),
            feature_hash: feature_hash.into(),
            config_hash: String::new(),
            model,
            log,
        }
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, serde_json::to_vec(ckpt)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let ckpt: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("checkpoint format {} (expected {CHECKPOINT_FORMAT})", ckpt.format),
        });
    }
    Ok(ckpt)
}
