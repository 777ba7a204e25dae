//! Run configuration: one JSON document plus dotted-path overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::ddpg::TrainConfig;
use crate::rewards::RewardParams;
use crate::scene::SceneRef;
use crate::sim::SimParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("override '{0}' is not of the form key.path=value")]
    OverrideSyntax(String),
    #[error("override '{key}': unknown key '{segment}'")]
    UnknownKey { key: String, segment: String },
    #[error("override '{key}': {message}")]
    OverrideValue { key: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneRef,
    pub sim: SimParams,
    pub rewards: RewardParams,
    pub train: TrainConfig,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: SceneRef("train".into()),
            sim: SimParams::default(),
            rewards: RewardParams::default(),
            train: TrainConfig::default(),
            out: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Read {
            path: origin.to_path_buf(),
            message: format!("{}: {}", e.path(), e.inner()),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Applies `key.path=value`. The value is read as JSON when it parses,
    /// otherwise as a bare string; the key must already exist.
    pub fn with_override(&self, spec: &str) -> Result<Self, ConfigError> {
        let (key, raw) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::OverrideSyntax(spec.to_string()))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::OverrideSyntax(spec.to_string()));
        }
        let value = serde_json::from_str::<Value>(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().into()));
        let mut doc = serde_json::to_value(self).expect("config serializes");
        let mut node = &mut doc;
        for segment in key.split('.') {
            node = node
                .as_object_mut()
                .and_then(|m| m.get_mut(segment))
                .ok_or_else(|| ConfigError::UnknownKey {
                    key: key.to_string(),
                    segment: segment.to_string(),
                })?;
        }
        *node = value;
        serde_json::from_value(doc).map_err(|e| ConfigError::OverrideValue {
            key: key.to_string(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sim.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.rewards
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}
