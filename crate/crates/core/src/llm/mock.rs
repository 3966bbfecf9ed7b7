use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{estimate_tokens, ChatBackend, ChatRequest, ChatResponse};
use crate::fingerprint::prompt_fingerprint;
use crate::jsonl::{read_records, JsonlError};
use crate::retry::BackendError;

/// Reply given for any prompt whose fingerprint is not in the script.
pub const UNSCRIPTED: &str = "UNSCRIPTED";

/// One line of a mock-script file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRecord {
    pub fp: String,
    pub prompt: String,
    pub response: String,
}

impl ScriptRecord {
    pub fn new(prompt: impl Into<String>, response: impl Into<String>) -> Self {
        let prompt = prompt.into();
        Self {
            fp: prompt_fingerprint(&prompt),
            prompt,
            response: response.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissedPrompt {
    pub fp: String,
    pub prompt: String,
}

/// Offline chat backend answering from a fingerprint → response table.
///
/// Read-only after construction apart from the miss log.
#[derive(Debug, Default)]
pub struct ScriptedMock {
    responses: HashMap<String, String>,
    misses: Mutex<Vec<MissedPrompt>>,
}

impl ScriptedMock {
    pub fn from_records(records: impl IntoIterator<Item = ScriptRecord>) -> Self {
        let mut responses = HashMap::new();
        for r in records {
            if responses.insert(r.fp.clone(), r.response).is_some() {
                tracing::warn!(fp = %r.fp, "duplicate mock-script fingerprint; last one wins");
            }
        }
        Self {
            responses,
            misses: Mutex::default(),
        }
    }

    /// Script keyed by the literal prompt text of each pair.
    pub fn from_pairs<P, R>(pairs: impl IntoIterator<Item = (P, R)>) -> Self
    where
        P: Into<String>,
        R: Into<String>,
    {
        Self::from_records(pairs.into_iter().map(|(p, r)| ScriptRecord::new(p, r)))
    }

    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        let mut records = Vec::new();
        for (line, rec) in read_records::<ScriptRecord>(path)? {
            if rec.fp.len() != 16 || !rec.fp.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(JsonlError::format(
                    path,
                    line,
                    format!("fingerprint {:?} is not 16 hex digits", rec.fp),
                ));
            }
            records.push(ScriptRecord {
                fp: rec.fp.to_ascii_lowercase(),
                ..rec
            });
        }
        Ok(Self::from_records(records))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Prompts that fell through to [`UNSCRIPTED`], in call order.
    pub fn misses(&self) -> Vec<MissedPrompt> {
        self.misses.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn miss_count(&self) -> usize {
        self.misses.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}

impl ChatBackend for ScriptedMock {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let prompt = request.prompt_text();
        let fp = prompt_fingerprint(&prompt);
        let text = match self.responses.get(&fp) {
            Some(r) => r.clone(),
            None => {
                tracing::warn!(%fp, tag = %request.request_tag, "unscripted prompt");
                self.misses
                    .lock()
                    .unwrap_or_else(|e| e.into_inner())
                    .push(MissedPrompt {
                        fp,
                        prompt: prompt.clone(),
                    });
                UNSCRIPTED.to_string()
            }
        };
        Ok(ChatResponse {
            input_token_estimate: estimate_tokens(&prompt),
            output_token_estimate: estimate_tokens(&text),
            text,
            latency_ms: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn ask(mock: &ScriptedMock, text: &str) -> String {
        mock.complete(&ChatRequest::new("m", text)).unwrap().text
    }

    #[test]
    fn scripted_echo() {
        let mock = ScriptedMock::from_pairs([("ping", "pong")]);
        let resp = mock.complete(&ChatRequest::new("m", "ping")).unwrap();
        assert_eq!(resp.text, "pong");
        assert_eq!(resp.latency_ms, 0);
        assert_eq!(mock.miss_count(), 0);
    }

    #[test]
    fn unscripted_fallback_records_miss() {
        let mock = ScriptedMock::from_pairs([("ping", "pong")]);
        assert_eq!(ask(&mock, "something else"), UNSCRIPTED);
        let misses = mock.misses();
        assert_eq!(misses.len(), 1);
        assert_eq!(misses[0].prompt, "something else");
        assert_eq!(misses[0].fp, prompt_fingerprint("something else"));
    }

    #[test]
    fn whitespace_variants_resolve() {
        let mock = ScriptedMock::from_pairs([("hello   world\n", "hi")]);
        assert_eq!(ask(&mock, " hello world"), "hi");
    }

    #[test]
    fn empty_file_means_everything_unscripted() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let mock = ScriptedMock::load(f.path()).unwrap();
        assert!(mock.is_empty());
        assert_eq!(ask(&mock, "anything"), UNSCRIPTED);
    }

    #[test]
    fn duplicate_fingerprint_last_wins() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for resp in ["first", "second"] {
            let rec = ScriptRecord::new("q", resp);
            writeln!(f, "{}", serde_json::to_string(&rec).unwrap()).unwrap();
        }
        let mock = ScriptedMock::load(f.path()).unwrap();
        assert_eq!(mock.len(), 1);
        assert_eq!(ask(&mock, "q"), "second");
    }

    #[test]
    fn malformed_line_reports_number() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{}", serde_json::to_string(&ScriptRecord::new("a", "b")).unwrap()).unwrap();
        writeln!(f, r#"{{"fp": "zz", "prompt": "x", "response": "y"}}"#).unwrap();
        match ScriptedMock::load(f.path()) {
            Err(JsonlError::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected format error, got {other:?}"),
        }
        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "not json").unwrap();
        assert!(matches!(
            ScriptedMock::load(g.path()),
            Err(JsonlError::Format { line: 1, .. })
        ));
    }
}
