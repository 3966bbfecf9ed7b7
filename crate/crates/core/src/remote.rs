//! Connection settings shared by the remote chat, search and embedding clients.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::retry::{BackendError, FailureKind, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint_url: String,
    /// Name of the environment variable holding the API key. Keys are never
    /// read from config files.
    pub api_key_env_var: String,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_max_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_timeout_ms() -> u64 {
    60_000
}

impl RemoteConfig {
    pub fn new(endpoint_url: impl Into<String>, api_key_env_var: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            api_key_env_var: api_key_env_var.into(),
            max_retries: default_max_retries(),
            retry_backoff_ms: default_backoff_ms(),
            timeout_ms: default_timeout_ms(),
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            backoff_ms: self.retry_backoff_ms,
        }
    }

    /// Read the API key, failing with an auth error when unset or empty.
    pub fn api_key(&self) -> Result<String, BackendError> {
        match std::env::var(&self.api_key_env_var) {
            Ok(k) if !k.trim().is_empty() => Ok(k),
            _ => Err(BackendError::new(
                FailureKind::Auth,
                format!("environment variable {} is not set", self.api_key_env_var),
            )),
        }
    }

    pub(crate) fn agent(&self) -> ureq::Agent {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(self.timeout_ms.max(1))))
            .http_status_as_error(true)
            .build();
        config.into()
    }
}
