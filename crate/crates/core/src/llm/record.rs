use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use super::{ChatBackend, ChatRequest, ChatResponse, ScriptRecord};
use crate::fingerprint::prompt_fingerprint;
use crate::jsonl::{write_records, JsonlError};
use crate::retry::BackendError;

/// Pass-through backend that remembers every successful exchange so it can be
/// written out as a mock script.
pub struct RecordingBackend {
    inner: Arc<dyn ChatBackend>,
    log: Mutex<BTreeMap<String, ScriptRecord>>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn ChatBackend>) -> Self {
        Self {
            inner,
            log: Mutex::default(),
        }
    }

    /// Recorded exchanges ordered by fingerprint.
    pub fn records(&self) -> Vec<ScriptRecord> {
        self.log
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Write the script sorted by fingerprint, so identical sessions produce
    /// identical files.
    pub fn save(&self, path: &Path) -> Result<(), JsonlError> {
        write_records(path, &self.records())
    }
}

impl ChatBackend for RecordingBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let resp = self.inner.complete(request)?;
        let prompt = request.prompt_text();
        let rec = ScriptRecord {
            fp: prompt_fingerprint(&prompt),
            prompt,
            response: resp.text.clone(),
        };
        self.log
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(rec.fp.clone(), rec);
        Ok(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedMock;

    #[test]
    fn record_then_replay() {
        let live = Arc::new(ScriptedMock::from_pairs([("a", "1"), ("b", "2")]));
        let rec = RecordingBackend::new(live);
        for p in ["b", "a", "b"] {
            rec.complete(&ChatRequest::new("m", p)).unwrap();
        }
        assert_eq!(rec.len(), 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.jsonl");
        rec.save(&path).unwrap();
        let first = std::fs::read(&path).unwrap();
        rec.save(&path).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());

        let replay = ScriptedMock::load(&path).unwrap();
        assert_eq!(replay.complete(&ChatRequest::new("m", "a")).unwrap().text, "1");
        assert_eq!(replay.complete(&ChatRequest::new("m", "b")).unwrap().text, "2");
        assert_eq!(replay.miss_count(), 0);
    }
}
