//! Server configuration: a JSON file with environment-variable overrides.
//!
//! HTTPS is mandatory unless the configuration opts out explicitly with
//! `"insecure_http": true`; a config with neither TLS material nor that
//! flag refuses to validate.

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
pub struct TlsConfig {
    pub cert_path: PathBuf,
    pub key_path: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_bind_address")]
    pub bind_address: String,
    #[serde(default = "default_port")]
    pub port: u16,
    pub tls: Option<TlsConfig>,
    /// Serve plain HTTP. Intended for tests and local development only.
    #[serde(default)]
    pub insecure_http: bool,
    pub models_dir: PathBuf,
    pub users_file: PathBuf,
    #[serde(default)]
    pub cors_allowed_origins: Vec<String>,
    /// External base URL used when building resource URIs (for deployments
    /// behind a proxy). Defaults to the scheme, bind address and port.
    pub base_url: Option<String>,
}

fn default_bind_address() -> String {
    "127.0.0.1".to_string()
}

fn default_port() -> u16 {
    8443
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("TLS is required: set tls.cert_path/tls.key_path or insecure_http")]
    TlsRequired,
    #[error("TLS file {0} does not exist")]
    MissingTlsFile(PathBuf),
    #[error("models_dir {0} is not a directory")]
    MissingModelsDir(PathBuf),
    #[error("users_file {0} does not exist")]
    MissingUsersFile(PathBuf),
    #[error("environment override {name} is invalid: {value:?}")]
    BadOverride { name: String, value: String },
}

impl ServerConfig {
    /// Read a config file, apply `METAREST_*` environment overrides, and
    /// validate the result.
    pub fn load(path: &Path) -> Result<ServerConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let mut config: ServerConfig = serde_json::from_str(&text)?;
        config.apply_env_overrides(|name| std::env::var(name).ok())?;
        config.validate()?;
        Ok(config)
    }

    /// Override bind address, port and paths from an environment lookup.
    pub fn apply_env_overrides(
        &mut self,
        get: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ConfigError> {
        if let Some(value) = get("METAREST_BIND_ADDRESS") {
            self.bind_address = value;
        }
        if let Some(value) = get("METAREST_PORT") {
            self.port = value.parse().map_err(|_| ConfigError::BadOverride {
                name: "METAREST_PORT".to_string(),
                value,
            })?;
        }
        if let Some(value) = get("METAREST_MODELS_DIR") {
            self.models_dir = PathBuf::from(value);
        }
        if let Some(value) = get("METAREST_USERS_FILE") {
            self.users_file = PathBuf::from(value);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match &self.tls {
            None if !self.insecure_http => return Err(ConfigError::TlsRequired),
            None => {}
            Some(tls) => {
                for path in [&tls.cert_path, &tls.key_path] {
                    if !path.is_file() {
                        return Err(ConfigError::MissingTlsFile(path.clone()));
                    }
                }
            }
        }
        if !self.models_dir.is_dir() {
            return Err(ConfigError::MissingModelsDir(self.models_dir.clone()));
        }
        if !self.users_file.is_file() {
            return Err(ConfigError::MissingUsersFile(self.users_file.clone()));
        }
        Ok(())
    }

    /// The URI prefix for resources served by this configuration.
    pub fn effective_base_url(&self) -> String {
        match &self.base_url {
            Some(url) => url.trim_end_matches('/').to_string(),
            None => {
                let scheme = if self.tls.is_some() { "https" } else { "http" };
                format!("{scheme}://{}:{}", self.bind_address, self.port)
            }
        }
    }
}
