//! Retry loop and error classification shared by the remote clients.

use std::thread;
use std::time::Duration;

/// How a single backend attempt failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// Bad or missing credentials. Never retried.
    Auth,
    /// Connection reset, 5xx, 429 and friends.
    Transient,
    Timeout,
    /// The server answered but the payload is unusable. Never retried.
    Protocol,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind:?}: {message}")]
pub struct BackendError {
    pub kind: FailureKind,
    pub message: String,
}

impl BackendError {
    pub fn new(kind: FailureKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn transient(message: impl Into<String>) -> Self {
        Self::new(FailureKind::Transient, message)
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self.kind, FailureKind::Transient | FailureKind::Timeout)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            backoff_ms: 500,
        }
    }
}

/// Outcome of [`with_retry`]: the last error plus how many attempts were made.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exhausted {
    pub attempts: u32,
    pub last: BackendError,
}

/// Run `op` until it succeeds, fails with a non-retryable error, or has been
/// attempted `max_retries + 1` times. Backoff doubles after each failure.
pub fn with_retry<T>(
    policy: RetryPolicy,
    mut op: impl FnMut(u32) -> Result<T, BackendError>,
) -> Result<T, Exhausted> {
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        match op(attempt) {
            Ok(v) => return Ok(v),
            Err(e) if !e.is_retryable() || attempt > policy.max_retries => {
                return Err(Exhausted {
                    attempts: attempt,
                    last: e,
                })
            }
            Err(e) => {
                let shift = (attempt - 1).min(10);
                let wait = policy.backoff_ms.saturating_mul(1 << shift);
                tracing::debug!(attempt, wait_ms = wait, error = %e, "retrying");
                if wait > 0 {
                    thread::sleep(Duration::from_millis(wait));
                }
            }
        }
    }
}

/// Map a `ureq` failure onto the retry classification.
pub(crate) fn classify_ureq(err: &ureq::Error) -> BackendError {
    match err {
        ureq::Error::StatusCode(401) | ureq::Error::StatusCode(403) => {
            BackendError::new(FailureKind::Auth, err.to_string())
        }
        ureq::Error::StatusCode(408) | ureq::Error::StatusCode(429) => {
            BackendError::transient(err.to_string())
        }
        ureq::Error::StatusCode(code) if *code >= 500 => BackendError::transient(err.to_string()),
        ureq::Error::StatusCode(_) => BackendError::new(FailureKind::Protocol, err.to_string()),
        ureq::Error::Timeout(_) => BackendError::new(FailureKind::Timeout, err.to_string()),
        ureq::Error::Json(_) => BackendError::new(FailureKind::Protocol, err.to_string()),
        _ => BackendError::transient(err.to_string()),
    }
}
