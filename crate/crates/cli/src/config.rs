//! Operator configuration: one TOML file, then `PASSGATE_*` environment
//! overrides, then command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8750";
pub const DEFAULT_RP_ID: &str = "passgate.local";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{var}: {message}")]
    Env { var: &'static str, message: String },
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub server: ServerConfig,
    pub client: ClientConfig,
    /// Fixes challenge nonces, identifiers and simulated face vectors. Key
    /// generation always uses OS entropy.
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: String,
    pub rp_id: String,
    pub admin_secret: String,
    /// Credential and face stores; in-memory only when unset.
    pub data_dir: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    /// Base URL of a running server. Without one, commands run against an
    /// embedded server (persisted under `server.data_dir` if set).
    pub server_url: Option<String>,
    pub device_dir: PathBuf,
    /// Key material for the sealed device files.
    pub device_secret: String,
    pub timeout_ms: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            server: ServerConfig::default(),
            client: ClientConfig::default(),
            seed: None,
        }
    }
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen: DEFAULT_LISTEN.into(),
            rp_id: DEFAULT_RP_ID.into(),
            admin_secret: String::new(),
            data_dir: None,
            audit_log: None,
        }
    }
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            server_url: None,
            device_dir: PathBuf::from(".passgate/devices"),
            device_secret: String::new(),
            timeout_ms: 10_000,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    /// Reads `path` if given, then applies the environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_owned(),
                    source,
                })?;
                Self::from_toml(&text, p)?
            }
            None => Self::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("PASSGATE_LISTEN") {
            self.server.listen = v;
        }
        if let Some(v) = get("PASSGATE_RP_ID") {
            self.server.rp_id = v;
        }
        if let Some(v) = get("PASSGATE_ADMIN_SECRET") {
            self.server.admin_secret = v;
        }
        if let Some(v) = get("PASSGATE_DATA_DIR") {
            self.server.data_dir = Some(v.into());
        }
        if let Some(v) = get("PASSGATE_AUDIT_LOG") {
            self.server.audit_log = Some(v.into());
        }
        if let Some(v) = get("PASSGATE_SERVER_URL") {
            self.client.server_url = Some(v);
        }
        if let Some(v) = get("PASSGATE_DEVICE_DIR") {
            self.client.device_dir = v.into();
        }
        if let Some(v) = get("PASSGATE_DEVICE_SECRET") {
            self.client.device_secret = v;
        }
        if let Some(v) = get("PASSGATE_TIMEOUT_MS") {
            self.client.timeout_ms = v.parse().map_err(|e| ConfigError::Env {
                var: "PASSGATE_TIMEOUT_MS",
                message: format!("{e}"),
            })?;
        }
        if let Some(v) = get("PASSGATE_SEED") {
            self.seed = Some(v.parse().map_err(|e| ConfigError::Env {
                var: "PASSGATE_SEED",
                message: format!("{e}"),
            })?);
        }
        Ok(())
    }
}
