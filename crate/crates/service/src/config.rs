//! Service configuration: a TOML file plus environment overrides.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! data_root = "/var/lib/custody"
//! seal_mode = "immediate"      # or "interval"
//! block_interval_ms = 1000
//!
//! [cluster]
//! standard_peers = 1
//! follower_peers = 2
//! replication_factor = 2
//! ```
//!
//! `CUSTODY_PORT` replaces the port of `listen`; `CUSTODY_DATA_ROOT`
//! replaces `data_root`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use custody_core::blobstore::ClusterConfig;
use custody_core::ledger::LedgerConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_PORT: &str = "CUSTODY_PORT";
pub const ENV_DATA_ROOT: &str = "CUSTODY_DATA_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SealMode {
    /// Seal a block before answering each write.
    #[default]
    Immediate,
    /// Queue writes and seal on a timer.
    Interval,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub data_root: Option<PathBuf>,
    pub seal_mode: SealMode,
    pub block_interval_ms: u64,
    pub cluster: ClusterConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_root: None,
            seal_mode: SealMode::Immediate,
            block_interval_ms: 1000,
            cluster: ClusterConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{var}={value:?} is not valid")]
    BadEnv { var: &'static str, value: String },
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Applies overrides from a variable lookup (normally `std::env::var`).
    pub fn apply_overrides<F>(&mut self, lookup: F) -> Result<(), ConfigError>
    where
        F: Fn(&str) -> Option<String>,
    {
        if let Some(value) = lookup(ENV_PORT) {
            let port = value.parse().map_err(|_| ConfigError::BadEnv {
                var: ENV_PORT,
                value: value.clone(),
            })?;
            self.listen.set_port(port);
        }
        if let Some(value) = lookup(ENV_DATA_ROOT) {
            if value.is_empty() {
                return Err(ConfigError::BadEnv {
                    var: ENV_DATA_ROOT,
                    value,
                });
            }
            self.data_root = Some(PathBuf::from(value));
        }
        Ok(())
    }

    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        self.apply_overrides(|k| std::env::var(k).ok())
    }

    pub fn ledger_config(&self) -> LedgerConfig {
        LedgerConfig {
            block_interval: self.block_interval(),
            seal_empty: false,
        }
    }

    pub fn block_interval(&self) -> Duration {
        Duration::from_millis(self.block_interval_ms.max(1))
    }
}
