//! On-disk configuration schemas (TOML) for dataset synthesis and training.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::TrainConfig;
use crate::synth::{CorruptionSpec, SceneConfig};

/// Top-level synthesis config: one scene template stamped out `sequences`
/// times (seed offset per sequence), optionally corrupted.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub sequences: usize,
    pub scene: SceneConfig,
    pub corruption: Option<CorruptionSpec>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sequences: 1,
            scene: SceneConfig::default(),
            corruption: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainFileConfig {
    pub train: TrainConfig,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    Ok(toml::from_str(&text)?)
}

pub fn load_synth_config(path: &Path) -> Result<SynthConfig> {
    let cfg: SynthConfig = read_toml(path)?;
    if cfg.sequences == 0 {
        return Err(Error::Config("sequences must be at least 1".into()));
    }
    Ok(cfg)
}

pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    let cfg: TrainFileConfig = read_toml(path)?;
    cfg.train.validate()?;
    Ok(cfg.train)
}
