//! Chat-completion gateway used by the rewriter, the knowledge filter and the
//! reader.
//!
//! A [`Gateway`] wraps any [`ChatBackend`] with retries and an admission limit
//! on in-flight requests. Two backends ship with the crate: an
//! OpenAI-compatible HTTP client ([`RemoteChatBackend`]) and a replay mock that
//! resolves prompts by fingerprint ([`ScriptedMock`]). [`RecordingBackend`]
//! sits in front of either and captures every exchange in the mock-script
//! format.

mod mock;
mod record;
mod remote;

use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};

pub use mock::{MissedPrompt, ScriptRecord, ScriptedMock, UNSCRIPTED};
pub use record::RecordingBackend;
pub use remote::RemoteChatBackend;

use crate::jsonl::JsonlError;
use crate::remote::RemoteConfig;
use crate::retry::{with_retry, BackendError, FailureKind, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_text: Option<String>,
    pub user_text: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Caller label used only for logging.
    pub request_tag: String,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, user_text: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            system_text: None,
            user_text: user_text.into(),
            temperature: 0.0,
            max_output_tokens: 512,
            request_tag: String::new(),
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.request_tag = tag.into();
        self
    }

    /// The text a fingerprint is computed over: system text (if any), a blank
    /// line, then the user text.
    pub fn prompt_text(&self) -> String {
        match &self.system_text {
            Some(sys) if !sys.is_empty() => format!("{sys}\n\n{}", self.user_text),
            _ => self.user_text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub input_token_estimate: u64,
    pub output_token_estimate: u64,
    pub latency_ms: u64,
}

/// Rough token count: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// One attempt at a chat completion. Retries and admission control live in
/// [`Gateway`], not here.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("timed out after {attempts} attempt(s): {message}")]
    Timeout { attempts: u32, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("mock script: {0}")]
    Script(#[from] JsonlError),
    #[error("gateway configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    RemoteHttp,
    ScriptedMock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    pub backend_kind: BackendKind,
    #[serde(default = "default_model")]
    pub model_id: String,
    /// Remote only.
    #[serde(default)]
    pub endpoint_url: Option<String>,
    /// Remote only.
    #[serde(default)]
    pub api_key_env_var: Option<String>,
    /// Scripted mock only.
    #[serde(default)]
    pub script_path: Option<PathBuf>,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    #[serde(default = "default_concurrency")]
    pub max_concurrent_requests: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
}

fn default_model() -> String {
    "gpt-3.5-turbo".to_string()
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_concurrency() -> usize {
    8
}
fn default_timeout_ms() -> u64 {
    60_000
}
fn default_max_output_tokens() -> u32 {
    512
}

impl GatewayConfig {
    pub fn scripted(script_path: impl Into<PathBuf>) -> Self {
        Self {
            backend_kind: BackendKind::ScriptedMock,
            model_id: default_model(),
            endpoint_url: None,
            api_key_env_var: None,
            script_path: Some(script_path.into()),
            max_retries: default_max_retries(),
            retry_backoff_ms: default_backoff_ms(),
            max_concurrent_requests: default_concurrency(),
            timeout_ms: default_timeout_ms(),
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
        }
    }

    pub fn remote(endpoint_url: impl Into<String>, api_key_env_var: impl Into<String>) -> Self {
        Self {
            backend_kind: BackendKind::RemoteHttp,
            endpoint_url: Some(endpoint_url.into()),
            api_key_env_var: Some(api_key_env_var.into()),
            script_path: None,
            ..Self::scripted("")
        }
    }

    pub fn limits(&self) -> GatewayLimits {
        GatewayLimits {
            retry: RetryPolicy {
                max_retries: self.max_retries,
                backoff_ms: self.retry_backoff_ms,
            },
            max_concurrent_requests: self.max_concurrent_requests.max(1),
        }
    }

    fn remote_config(&self) -> Result<RemoteConfig, GatewayError> {
        let endpoint = self
            .endpoint_url
            .clone()
            .ok_or_else(|| GatewayError::Config("remote_http requires endpoint_url".into()))?;
        let key_var = self
            .api_key_env_var
            .clone()
            .ok_or_else(|| GatewayError::Config("remote_http requires api_key_env_var".into()))?;
        Ok(RemoteConfig {
            endpoint_url: endpoint,
            api_key_env_var: key_var,
            max_retries: self.max_retries,
            retry_backoff_ms: self.retry_backoff_ms,
            timeout_ms: self.timeout_ms,
        })
    }

    /// Build the configured backend. Remote backends check their API key here,
    /// so a missing key fails before any request is sent.
    pub fn build_backend(&self) -> Result<Arc<dyn ChatBackend>, GatewayError> {
        match self.backend_kind {
            BackendKind::RemoteHttp => {
                let backend = RemoteChatBackend::new(self.remote_config()?)
                    .map_err(|e| GatewayError::Auth(e.message))?;
                Ok(Arc::new(backend))
            }
            BackendKind::ScriptedMock => {
                let path = self.script_path.as_ref().ok_or_else(|| {
                    GatewayError::Config("scripted_mock requires script_path".into())
                })?;
                Ok(Arc::new(ScriptedMock::load(path)?))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatewayLimits {
    pub retry: RetryPolicy,
    pub max_concurrent_requests: usize,
}

impl Default for GatewayLimits {
    fn default() -> Self {
        Self {
            retry: RetryPolicy::default(),
            max_concurrent_requests: default_concurrency(),
        }
    }
}

/// Counting semaphore bounding in-flight backend calls.
#[derive(Debug)]
struct Admission {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Admission);

impl Admission {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}

/// Retrying, admission-limited front door to a [`ChatBackend`].
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    limits: GatewayLimits,
    admission: Admission,
    model_id: String,
    temperature: f64,
    max_output_tokens: u32,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("limits", &self.limits)
            .field("model_id", &self.model_id)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, limits: GatewayLimits) -> Self {
        Self {
            backend,
            admission: Admission::new(limits.max_concurrent_requests.max(1)),
            limits,
            model_id: default_model(),
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
        }
    }

    pub fn from_config(cfg: &GatewayConfig) -> Result<Self, GatewayError> {
        Ok(Self::with_backend(cfg, cfg.build_backend()?))
    }

    /// Use `backend` but take limits and request defaults from `cfg`.
    pub fn with_backend(cfg: &GatewayConfig, backend: Arc<dyn ChatBackend>) -> Self {
        let mut gw = Self::new(backend, cfg.limits());
        gw.model_id = cfg.model_id.clone();
        gw.temperature = cfg.temperature;
        gw.max_output_tokens = cfg.max_output_tokens;
        gw
    }

    /// A request carrying this gateway's model and sampling defaults.
    pub fn request(&self, tag: &str, user_text: impl Into<String>) -> ChatRequest {
        ChatRequest {
            model_id: self.model_id.clone(),
            system_text: None,
            user_text: user_text.into(),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            request_tag: tag.to_string(),
        }
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        if request.user_text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("user_text is empty".into()));
        }
        if !(request.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }
        let result = with_retry(self.limits.retry, |attempt| {
            let _permit = self.admission.acquire();
            tracing::trace!(tag = %request.request_tag, attempt, "chat request");
            self.backend.complete(request)
        });
        result.map_err(|ex| match ex.last.kind {
            FailureKind::Auth => GatewayError::Auth(ex.last.message),
            FailureKind::Timeout => GatewayError::Timeout {
                attempts: ex.attempts,
                message: ex.last.message,
            },
            FailureKind::Transient | FailureKind::Protocol => GatewayError::Transport {
                attempts: ex.attempts,
                message: ex.last.message,
            },
        })
    }
}
