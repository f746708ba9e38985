//! On-disk training state: one directory holding a safetensors file with
//! every tensor and a JSON file with counters, config and RNG state.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainingConfig;
use crate::error::{Result, TrainError};

pub const FORMAT_VERSION: u32 = 1;
pub const TENSORS_FILE: &str = "state.safetensors";
pub const META_FILE: &str = "meta.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub epochs_completed: usize,
    pub steps_completed: u64,
    pub config: TrainingConfig,
    pub rng: ChaCha8Rng,
    /// Adam step counters for generator, noise and content discriminator.
    pub adam_steps: [u64; 3],
    /// Replay pool occupancy for noise and content discriminator.
    pub pool_lens: [usize; 2],
}

/// A complete, self-owned copy of the training state.
#[derive(Clone)]
pub struct Snapshot {
    pub tensors: HashMap<String, Tensor>,
    pub meta: CheckpointMeta,
}

pub fn checkpoint_name(epochs_completed: usize) -> String {
    format!("epoch_{epochs_completed:04}")
}

/// Writes into a sibling temporary directory and renames it into place, so
/// a crash never leaves a half-written checkpoint under the final name.
pub fn write_checkpoint(dir: &Path, snapshot: &Snapshot) -> Result<PathBuf> {
    let parent = dir
        .parent()
        .ok_or_else(|| TrainError::Checkpoint(format!("{} has no parent", dir.display())))?;
    fs::create_dir_all(parent)?;
    let name = dir
        .file_name()
        .ok_or_else(|| TrainError::Checkpoint(format!("{} has no name", dir.display())))?
        .to_string_lossy();
    let tmp = parent.join(format!(".{name}.tmp"));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    candle_core::safetensors::save(&snapshot.tensors, tmp.join(TENSORS_FILE))?;
    fs::write(tmp.join(META_FILE), serde_json::to_vec_pretty(&snapshot.meta)?)?;
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(&tmp, dir)?;
    Ok(dir.to_path_buf())
}

pub fn read_meta(dir: &Path) -> Result<CheckpointMeta> {
    let path = dir.join(META_FILE);
    if !path.is_file() {
        return Err(TrainError::Checkpoint(format!("{} is not a checkpoint directory", dir.display())));
    }
    let meta: CheckpointMeta = serde_json::from_slice(&fs::read(path)?)?;
    if meta.format_version != FORMAT_VERSION {
        return Err(TrainError::Checkpoint(format!(
            "checkpoint format {} is not supported (expected {FORMAT_VERSION})",
            meta.format_version
        )));
    }
    meta.config.validate()?;
    Ok(meta)
}

pub fn read_checkpoint(dir: &Path, device: &Device) -> Result<Snapshot> {
    let meta = read_meta(dir)?;
    let tensors = candle_core::safetensors::load(dir.join(TENSORS_FILE), device)?;
    Ok(Snapshot { tensors, meta })
}

/// Checkpoint directories under `root`, oldest first.
pub fn list_checkpoints(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Ok(Vec::new());
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(META_FILE).is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}
