use std::time::Instant;

use serde_json::{json, Value};

use super::{estimate_tokens, ChatBackend, ChatRequest, ChatResponse};
use crate::remote::RemoteConfig;
use crate::retry::{classify_ureq, BackendError, FailureKind};

/// Client for an OpenAI-compatible `chat/completions` endpoint.
pub struct RemoteChatBackend {
    cfg: RemoteConfig,
    key: String,
    agent: ureq::Agent,
}

impl RemoteChatBackend {
    /// Fails with an auth error when the key variable is unset.
    pub fn new(cfg: RemoteConfig) -> Result<Self, BackendError> {
        let key = cfg.api_key()?;
        let agent = cfg.agent();
        Ok(Self { cfg, key, agent })
    }
}

fn request_body(req: &ChatRequest) -> Value {
    let mut messages = Vec::new();
    if let Some(sys) = req.system_text.as_deref().filter(|s| !s.is_empty()) {
        messages.push(json!({"role": "system", "content": sys}));
    }
    messages.push(json!({"role": "user", "content": req.user_text}));
    json!({
        "model": req.model_id,
        "messages": messages,
        "temperature": req.temperature,
        "max_tokens": req.max_output_tokens,
    })
}

fn parse_reply(body: &Value) -> Result<(String, Option<u64>, Option<u64>), BackendError> {
    let text = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| {
            BackendError::new(FailureKind::Protocol, "reply has no choices[0].message.content")
        })?;
    let usage_in = body.pointer("/usage/prompt_tokens").and_then(Value::as_u64);
    let usage_out = body.pointer("/usage/completion_tokens").and_then(Value::as_u64);
    Ok((text.to_string(), usage_in, usage_out))
}

impl ChatBackend for RemoteChatBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let started = Instant::now();
        let mut resp = self
            .agent
            .post(&self.cfg.endpoint_url)
            .header("Authorization", &format!("Bearer {}", self.key))
            .send_json(request_body(request))
            .map_err(|e| classify_ureq(&e))?;
        let body: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| classify_ureq(&e))?;
        let (text, usage_in, usage_out) = parse_reply(&body)?;
        Ok(ChatResponse {
            input_token_estimate: usage_in.unwrap_or_else(|| estimate_tokens(&request.prompt_text())),
            output_token_estimate: usage_out.unwrap_or_else(|| estimate_tokens(&text)),
            text,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}
