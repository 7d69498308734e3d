// SPDX-License-Identifier: Apache-2.0

//! The shared TOML configuration file. Every section and key is optional;
//! missing values take the defaults of the owning module.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::FusionConfig;
use crate::error::ArgumentError;
use crate::gateway::GatewayConfig;
use crate::mapping::MappingConfig;
use crate::parallel::Execution;
use crate::prompts::PromptSet;
use crate::structural::StructuralWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub theta: f64,
    pub max_rounds: u32,
    pub generator_timeout_secs: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            theta: 0.85,
            max_rounds: 5,
            generator_timeout_secs: 600,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    /// Directory with replacement templates; relative paths resolve against
    /// the config file's directory.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    pub execution: Execution,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub clustering: FusionConfig,
    pub mapping: MappingConfig,
    #[serde(rename = "loop")]
    pub loop_: LoopConfig,
    pub gateway: GatewayConfig,
    pub structural: StructuralWeights,
    pub prompts: PromptConfig,
    pub runtime: RuntimeConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Invalid(#[from] ArgumentError),
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: "<config>".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Config::parse(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })?;
        if let (Some(dir), Some(base)) = (cfg.prompts.dir.as_mut(), path.parent()) {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ArgumentError> {
        self.clustering.validate()?;
        self.mapping.validate()?;
        self.gateway.validate()?;
        let theta = self.loop_.theta;
        if !(0.0..=1.0).contains(&theta) {
            return Err(ArgumentError::new(format!("loop.theta must be in [0,1], got {theta}")));
        }
        let w = &self.structural;
        if !(w.struct_path_weight >= 0.0 && w.struct_lca_weight >= 0.0) {
            return Err(ArgumentError::new("structural weights must be >= 0"));
        }
        Ok(())
    }

    pub fn prompt_set(&self) -> Result<PromptSet, ConfigError> {
        match &self.prompts.dir {
            None => Ok(PromptSet::default()),
            Some(dir) => PromptSet::from_dir(dir).map_err(|source| ConfigError::Io {
                path: dir.display().to_string(),
                source,
            }),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
