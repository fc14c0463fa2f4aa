use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::http::{HttpError, JsonClient, RetryPolicy};
use crate::ingest::schema::AttackCategory;

use super::parse::AnalysisResponse;

/// What a completion is for. Deterministic backends may use this; remote
/// models only see the prompt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Task {
    Analysis { log_id: u64, lr_score: f64 },
    Compression { entries: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub task: Task,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("malformed completion payload: {0}")]
    Malformed(String),
    #[error("backend failure: {0}")]
    Other(String),
}

/// A text-completion model.
pub trait LlmBackend: Send + Sync {
    fn id(&self) -> &str;
    /// True when the reply is a pure function of the request.
    fn is_deterministic(&self) -> bool;
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError>;
}

/// Deterministic stand-in model.
///
/// Analysis replies threshold the logistic score at 0.5 and emit a valid
/// four-key object; compression replies are a fixed template.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

impl MockBackend {
    pub fn analysis_reply(log_id: u64, lr_score: f64) -> String {
        let label = u8::from(lr_score >= 0.5);
        let attack_cat = if label == 1 {
            AttackCategory::Generic
        } else {
            AttackCategory::Normal
        };
        let verdict = if label == 1 { "suggests attack activity" } else { "looks benign" };
        AnalysisResponse {
            id: log_id,
            attack_cat,
            label,
            short_summary: format!("Flow {log_id} {verdict}; logistic anomaly score {lr_score:.4}."),
        }
        .to_json()
    }

    pub fn compression_reply(entries: usize) -> String {
        format!("Merged narrative of {entries} recent flow summaries.")
    }
}

impl LlmBackend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        Ok(match request.task {
            Task::Analysis { log_id, lr_score } => Self::analysis_reply(log_id, lr_score),
            Task::Compression { entries } => Self::compression_reply(entries),
        })
    }
}

/// Backend driven by a closure; used for scripted replies and fault injection.
pub struct FnBackend<F> {
    id: String,
    f: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&CompletionRequest<'_>) -> Result<String, BackendError> + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

impl<F> LlmBackend for FnBackend<F>
where
    F: Fn(&CompletionRequest<'_>) -> Result<String, BackendError> + Send + Sync,
{
    fn id(&self) -> &str {
        &self.id
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        (self.f)(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatConfig {
    pub base_url: String,
    #[serde(default = "default_path")]
    pub path: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_path() -> String {
    "/v1/chat/completions".to_string()
}

fn default_max_tokens() -> u32 {
    256
}

fn default_timeout_secs() -> u64 {
    60
}

impl ChatConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            path: default_path(),
            model: model.into(),
            api_key_env: None,
            max_tokens: default_max_tokens(),
            timeout_secs: default_timeout_secs(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn url(&self) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), self.path)
    }
}

/// OpenAI-compatible chat-completion client, temperature pinned to 0.
#[derive(Debug, Clone)]
pub struct ChatBackend {
    cfg: ChatConfig,
    client: JsonClient,
    id: String,
}

impl ChatBackend {
    pub fn new(cfg: ChatConfig) -> Self {
        let client = JsonClient::new(Duration::from_secs(cfg.timeout_secs), cfg.retry.clone());
        let id = format!("chat:{}", cfg.model);
        Self { cfg, client, id }
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
            "max_tokens": self.cfg.max_tokens,
        })
    }

    /// Send one prompt and return the assistant message text.
    pub fn http_complete(&self, prompt: &str) -> Result<String, BackendError> {
        let token = self
            .cfg
            .api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok());
        let body = self.request_body(prompt).to_string();
        let text = self.client.post(&self.cfg.url(), token.as_deref(), &body)?;
        let payload: Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        payload
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))
    }
}

impl LlmBackend for ChatBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        self.http_complete(request.prompt)
    }
}
