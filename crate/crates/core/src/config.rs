//! TOML run configuration.
//!
//! ```toml
//! seed = 42                      # master seed, overrides policy.seed
//!
//! [policy]
//! strategy = "budgeted"          # random | nodetype | budgeted | free
//!
//! [policy.regions]               # exempt | policy | <strategy>
//! prompt = "exempt"
//! reasoning = "random"
//! code = "policy"
//!
//! [policy.node_probs]
//! default = 0.15
//! [policy.node_probs.probs]      # replaces the whole table when present
//! ASSIGN = 0.42
//! CALL = 0.42
//!
//! [schedule]
//! kind = "linear"                # linear | cosine | constant
//! timesteps = 1000
//! eps_min = 0.0
//! eps_max = 1.0
//! total_steps = 1000
//! reverse = false
//! compose = false
//! ```
//!
//! Every key is optional. Command-line flags override the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corrupt::{CorruptError, CorruptionPolicy};
use crate::schedule::{Schedule, ScheduleError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Policy(#[from] CorruptError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub policy: CorruptionPolicy,
    pub schedule: Schedule,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config, ConfigError> {
        let mut config: Config = toml::from_str(text)?;
        if let Some(seed) = config.seed {
            config.policy.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Config::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.policy.validate()?;
        self.schedule.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
