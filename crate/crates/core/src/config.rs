//! JSON configuration file shared by every command.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::confidence::TrainConfig;
use crate::fusion::{FusionFitOptions, DEFAULT_EPSILON};
use crate::ingest::DEFAULT_TRAIN_FRACTION;
use crate::llm::{ChatBackend, ChatConfig, LlmBackend, MockBackend};
use crate::memory::{Embedder, HashEmbedder, RemoteEmbedder, RemoteEmbedderConfig, DEFAULT_DIMENSION};
use crate::pipeline::PipelineConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSettings {
    pub epsilon: f64,
    /// Overrides the empirical training-set attack frequency.
    pub prior_anomalous: Option<f64>,
}

impl Default for FusionSettings {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            prior_anomalous: None,
        }
    }
}

impl FusionSettings {
    pub fn fit_options(&self) -> FusionFitOptions {
        FusionFitOptions {
            epsilon: self.epsilon,
            prior_anomalous: self.prior_anomalous,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSettings {
    #[default]
    Mock,
    Http(ChatConfig),
}

impl BackendSettings {
    pub fn build(&self) -> Box<dyn LlmBackend> {
        match self {
            BackendSettings::Mock => Box::new(MockBackend),
            BackendSettings::Http(cfg) => Box::new(ChatBackend::new(cfg.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderSettings {
    Hash {
        #[serde(default = "default_dimension")]
        dimension: usize,
    },
    Remote(RemoteEmbedderConfig),
}

fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}

impl Default for EmbedderSettings {
    fn default() -> Self {
        EmbedderSettings::Hash {
            dimension: DEFAULT_DIMENSION,
        }
    }
}

impl EmbedderSettings {
    pub fn build(&self) -> Box<dyn Embedder> {
        match self {
            EmbedderSettings::Hash { dimension } => Box::new(HashEmbedder::new(*dimension)),
            EmbedderSettings::Remote(cfg) => Box::new(RemoteEmbedder::new(cfg.clone())),
        }
    }
}

/// File locations; command-line flags take precedence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PathSettings {
    pub train: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub confidence_model: Option<PathBuf>,
    pub normalizer: Option<PathBuf>,
    pub fusion_model: Option<PathBuf>,
    pub ltm: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub pred: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    /// CSV header renames, source name -> schema name.
    pub columns: BTreeMap<String, String>,
    pub train_fraction: f64,
    pub train: TrainConfig,
    pub fusion: FusionSettings,
    pub pipeline: PipelineConfig,
    pub backend: BackendSettings,
    pub embedder: EmbedderSettings,
    pub paths: PathSettings,
    /// Row label used in report tables.
    pub model_name: String,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            columns: BTreeMap::new(),
            train_fraction: DEFAULT_TRAIN_FRACTION,
            train: TrainConfig::default(),
            fusion: FusionSettings::default(),
            pipeline: PipelineConfig::default(),
            backend: BackendSettings::default(),
            embedder: EmbedderSettings::default(),
            paths: PathSettings::default(),
            model_name: "DM-RAG".to_string(),
        }
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: Self = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ConfigError::Invalid("train_fraction must be in (0, 1)".into()));
        }
        self.train
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.pipeline
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.fusion.epsilon > 0.0 && self.fusion.epsilon < 0.5) {
            return Err(ConfigError::Invalid("fusion.epsilon must be in (0, 0.5)".into()));
        }
        if let Some(p) = self.fusion.prior_anomalous {
            if !(p > 0.0 && p < 1.0) {
                return Err(ConfigError::Invalid("fusion.prior_anomalous must be in (0, 1)".into()));
            }
        }
        if let EmbedderSettings::Hash { dimension: 0 } = self.embedder {
            return Err(ConfigError::Invalid("embedder dimension must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        let cfg: AppConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, AppConfig::default());
        assert_eq!(cfg.pipeline.stm_capacity, 10);
        assert_eq!(cfg.pipeline.promotion_threshold, 0.9);
        assert_eq!(cfg.pipeline.retrieval_k, 10);
        assert_eq!(cfg.train.learning_rate, 0.1);
        assert_eq!(cfg.train.max_epochs, 5000);
    }

    #[test]
    fn http_backend_and_remote_embedder() {
        let cfg: AppConfig = serde_json::from_str(
            r#"{
                "backend": {"kind": "http", "base_url": "http://127.0.0.1:8000", "model": "phi-4-mini",
                            "api_key_env": "LLM_API_KEY", "retry": {"max_retries": 2}},
                "embedder": {"kind": "remote", "url": "http://127.0.0.1:9000/embed"},
                "pipeline": {"stm_capacity": 5},
                "columns": {"Label": "label"}
            }"#,
        )
        .unwrap();
        match &cfg.backend {
            BackendSettings::Http(c) => {
                assert_eq!(c.path, "/v1/chat/completions");
                assert_eq!(c.retry.max_retries, 2);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(cfg.embedder, EmbedderSettings::Remote(_)));
        assert_eq!(cfg.pipeline.stm_capacity, 5);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<AppConfig>(r#"{"pipline": {}}"#).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let mut cfg = AppConfig::default();
        cfg.pipeline.promotion_threshold = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = AppConfig::default();
        cfg.fusion.prior_anomalous = Some(1.0);
        assert!(cfg.validate().is_err());
    }
}
