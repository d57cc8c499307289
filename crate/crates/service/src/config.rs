use std::path::{Path, PathBuf};

use figment::providers::{Env, Format, Serialized, Toml};
use figment::Figment;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use flowforge::orchestrator::{ConstrainMode, OrchestrationConfig};
use flowforge::protocol::GeneratorRegistry;

/// Settings for the service and the command line. Read from an optional
/// TOML file, then from `FLOWFORGE_*` environment variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub catalog_dir: PathBuf,
    pub corpus_dir: PathBuf,
    /// Where built retrieval indexes are cached.
    pub index_dir: PathBuf,
    pub generator_name: String,
    /// Endpoint of the `http` generator.
    pub generator_url: Option<String>,
    pub k: usize,
    pub repair_mode: bool,
    pub context_expansion: bool,
    pub listen_address: String,
    pub auth_token: Option<String>,
    /// Directory for per-session event logs.
    pub event_log_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            catalog_dir: flowforge::fixtures::demo_catalog_dir(),
            corpus_dir: flowforge::fixtures::demo_corpus_dir(),
            index_dir: PathBuf::from(".flowforge/index"),
            generator_name: "reference".into(),
            generator_url: None,
            k: flowforge::retriever::DEFAULT_K,
            repair_mode: true,
            context_expansion: false,
            listen_address: "127.0.0.1:8080".into(),
            auth_token: None,
            event_log_dir: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("configuration: {0}")]
    Load(#[from] Box<figment::Error>),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("the http generator needs generator_url")]
    MissingUrl,
}

impl ServiceConfig {
    /// Defaults, then `file` if given, then the environment.
    pub fn load(file: Option<&Path>) -> Result<Self, ConfigError> {
        let mut fig = Figment::from(Serialized::defaults(Self::default()));
        if let Some(f) = file {
            fig = fig.merge(Toml::file_exact(f));
        }
        let cfg: Self = fig.merge(Env::prefixed("FLOWFORGE_")).extract().map_err(Box::new)?;
        Ok(cfg)
    }

    pub fn check(&self, registry: &GeneratorRegistry) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError::ZeroK);
        }
        if !registry.contains(&self.generator_name) {
            return Err(ConfigError::UnknownGenerator(self.generator_name.clone()));
        }
        if self.generator_name == crate::http_generator::NAME && self.generator_url.is_none() {
            return Err(ConfigError::MissingUrl);
        }
        Ok(())
    }

    pub fn orchestration(&self) -> OrchestrationConfig {
        OrchestrationConfig {
            k: self.k,
            constrain: if self.repair_mode {
                ConstrainMode::Repair
            } else {
                ConstrainMode::Reject
            },
            context_expansion: self.context_expansion,
            event_log_dir: self.event_log_dir.clone(),
            ..Default::default()
        }
    }
}
