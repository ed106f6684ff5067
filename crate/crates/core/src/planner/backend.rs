use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub const API_KEY_ENV: &str = "COVILLM_API_KEY";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("{API_KEY_ENV} is not set")]
    MissingApiKey,
    #[error("backend unreachable: {0}")]
    Transport(String),
    #[error("backend answered HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected backend payload: {0}")]
    Payload(String),
    #[error("scripted backend exhausted")]
    Exhausted,
}

/// Anything that turns a (system, user) prompt pair into raw text.
pub trait PlannerBackend: Send + Sync {
    fn model_id(&self) -> String;
    fn complete(&self, system: &str, user: &str) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
}

fn default_timeout() -> f64 {
    30.0
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4.1-mini".into(),
            timeout_s: default_timeout(),
        }
    }
}

/// Client for any endpoint speaking the chat-completions protocol.
///
/// The blocking HTTP client is built per request, on the calling thread, so
/// the backend can be owned and dropped from async code without tripping
/// over the client's internal runtime.
pub struct ChatCompletionsBackend {
    config: BackendConfig,
    api_key: String,
}

impl std::fmt::Debug for ChatCompletionsBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatCompletionsBackend")
            .field("config", &self.config)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl ChatCompletionsBackend {
    /// Reads the key from the environment. Fails before any network traffic
    /// when it is missing.
    pub fn from_env(config: BackendConfig) -> Result<Self, BackendError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or(BackendError::MissingApiKey)?;
        Self::with_key(config, key)
    }

    pub fn with_key(config: BackendConfig, api_key: String) -> Result<Self, BackendError> {
        if !(config.timeout_s > 0.0 && config.timeout_s.is_finite()) {
            return Err(BackendError::Transport(format!(
                "timeout {} s must be positive",
                config.timeout_s
            )));
        }
        Ok(Self { config, api_key })
    }

    fn client(&self) -> Result<reqwest::blocking::Client, BackendError> {
        reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(self.config.timeout_s))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }
}

impl PlannerBackend for ChatCompletionsBackend {
    fn model_id(&self) -> String {
        self.config.model.clone()
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        log::debug!(
            "POST {} (Authorization: Bearer <redacted>) {body}",
            self.endpoint()
        );
        let resp = self
            .client()?
            .post(self.endpoint())
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Transport(e.without_url().to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        log::debug!("response {status}: {text}");
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Payload(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Payload("missing choices[0].message.content".into()))
    }
}

/// Always answers with the same text.
#[derive(Debug, Clone)]
pub struct FixedBackend {
    model: String,
    response: String,
}

impl FixedBackend {
    pub fn new(model: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            response: response.into(),
        }
    }
}

impl PlannerBackend for FixedBackend {
    fn model_id(&self) -> String {
        self.model.clone()
    }

    fn complete(&self, _system: &str, _user: &str) -> Result<String, BackendError> {
        Ok(self.response.clone())
    }
}

/// Replays a queue of canned outcomes, one per call.
#[derive(Debug)]
pub struct ScriptedBackend {
    model: String,
    script: Mutex<VecDeque<Result<String, BackendError>>>,
}

impl ScriptedBackend {
    pub fn new(model: impl Into<String>, script: Vec<Result<String, BackendError>>) -> Self {
        Self {
            model: model.into(),
            script: Mutex::new(script.into()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().expect("script lock").len()
    }
}

impl PlannerBackend for ScriptedBackend {
    fn model_id(&self) -> String {
        self.model.clone()
    }

    fn complete(&self, _system: &str, _user: &str) -> Result<String, BackendError> {
        self.script
            .lock()
            .expect("script lock")
            .pop_front()
            .unwrap_or(Err(BackendError::Exhausted))
    }
}
