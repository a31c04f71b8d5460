//! Service configuration. A config file overrides defaults field by field,
//! so `{"recommender": {"theta": 0.8}}` changes only the threshold.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use formula_scout::eval::EvalSplit;
use formula_scout::features::{EmbedderError, Featurizer, HashedTrigramEmbedder, TextEmbedder, WordVectorEmbedder};
use formula_scout::features::{DEFAULT_PATTERN_DIM, DEFAULT_SEM_DIM};
use formula_scout::model::ModelConfig;
use formula_scout::recommend::RecommenderConfig;
use formula_scout::training::PairConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Names the config file used when no `--config` flag is given.
pub const CONFIG_ENV: &str = "FORMULA_SCOUT_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Invalid { path: String, message: String },
    #[error(transparent)]
    Embedder(#[from] EmbedderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SemanticEmbedder {
    Hashed { dim: usize, seed: u64 },
    /// Whitespace-separated text vectors, one word per line.
    WordVectors { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub semantic: SemanticEmbedder,
    pub pattern_dim: usize,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            semantic: SemanticEmbedder::Hashed {
                dim: DEFAULT_SEM_DIM,
                seed: 0,
            },
            pattern_dim: DEFAULT_PATTERN_DIM,
        }
    }
}

impl FeaturizerConfig {
    pub fn build(&self) -> Result<Featurizer, ConfigError> {
        let sem: Arc<dyn TextEmbedder> = match &self.semantic {
            SemanticEmbedder::Hashed { dim, seed } => Arc::new(HashedTrigramEmbedder::new(*dim, *seed)),
            SemanticEmbedder::WordVectors { path } => Arc::new(WordVectorEmbedder::from_file(path)?),
        };
        Ok(Featurizer::new(sem, self.pattern_dim))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            host: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub featurizer: FeaturizerConfig,
    pub model: ModelConfig,
    pub pairs: PairConfig,
    pub recommender: RecommenderConfig,
    pub eval: EvalSplit,
    /// Thresholds swept by `eval` when no grid is given on the command line.
    pub theta_grid: Vec<f64>,
    pub server: ServerConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            featurizer: FeaturizerConfig::default(),
            model: ModelConfig::desk(),
            pairs: PairConfig::default(),
            recommender: RecommenderConfig::default(),
            eval: EvalSplit::default(),
            theta_grid: vec![0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.2, 2.0, 4.0],
            server: ServerConfig::default(),
        }
    }
}

/// Recursively overlays `patch` onto `base`; arrays and scalars replace.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ServiceConfig {
    /// Parses a partial config; `origin` labels error messages.
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let invalid = |path: String, message: String| ConfigError::Invalid {
            path: if path.is_empty() || path == "." {
                origin.to_string()
            } else {
                format!("{origin}: {path}")
            },
            message,
        };
        let patch: Value = serde_json::from_str(text).map_err(|e| invalid(String::new(), e.to_string()))?;
        if !patch.is_object() {
            return Err(invalid(String::new(), "top level must be an object".into()));
        }
        let mut full = serde_json::to_value(ServiceConfig::default()).expect("defaults serialize");
        merge(&mut full, patch);
        let cfg: ServiceConfig =
            serde_path_to_error::deserialize(full).map_err(|e| invalid(e.path().to_string(), e.inner().to_string()))?;
        cfg.model
            .validate()
            .map_err(|e| invalid("model".into(), e.to_string()))?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// `explicit`, else the file named by the environment variable, else
    /// defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit {
            Some(p) => Self::from_path(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::from_path(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }
}
