use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::instance::{KnowledgeInstance, Source};
use crate::jsonl::{read_records, JsonlError};
use crate::remote::RemoteConfig;
use crate::retry::{classify_ureq, with_retry, BackendError, FailureKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub title: String,
    pub snippet: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SearchError {
    #[error("search authentication failed: {0}")]
    Auth(String),
    #[error("search transport error: {0}")]
    Transport(String),
}

impl From<BackendError> for SearchError {
    fn from(e: BackendError) -> Self {
        match e.kind {
            FailureKind::Auth => SearchError::Auth(e.message),
            _ => SearchError::Transport(e.message),
        }
    }
}

pub trait SearchBackend: Send + Sync {
    /// At most `n` hits in rank order.
    fn search(&self, query: &str, n: usize) -> Result<Vec<SearchHit>, SearchError>;
}

/// Results of one query, in rank order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResultGroup {
    pub query: String,
    pub query_index: usize,
    pub instances: Vec<KnowledgeInstance>,
}

/// Run one query and wrap the hits as external knowledge instances. Hits with
/// an empty title or snippet are dropped before ranks are assigned.
pub fn search(
    backend: &dyn SearchBackend,
    query: &str,
    query_index: usize,
    n: usize,
) -> Result<SearchResultGroup, SearchError> {
    let hits = backend.search(query, n)?;
    let mut instances = Vec::with_capacity(hits.len().min(n));
    for hit in hits {
        if instances.len() == n {
            break;
        }
        let source = Source::External {
            query_index,
            rank: instances.len() + 1,
            url: hit.url.clone(),
        };
        match KnowledgeInstance::new(hit.title, hit.snippet, source) {
            Ok(inst) => instances.push(inst),
            Err(e) => tracing::debug!(url = %hit.url, "skipping hit: {e}"),
        }
    }
    Ok(SearchResultGroup {
        query: query.to_string(),
        query_index,
        instances,
    })
}

/// Search every query concurrently; groups come back in query order.
pub fn search_all(
    backend: &dyn SearchBackend,
    queries: &[String],
    n: usize,
) -> Result<Vec<SearchResultGroup>, SearchError> {
    queries
        .par_iter()
        .enumerate()
        .map(|(i, q)| search(backend, q, i, n))
        .collect()
}

#[derive(Debug, Deserialize)]
struct CorpusRecord {
    query: String,
    results: Vec<SearchHit>,
}

/// Offline search backend: exact query string → hits, from a line-delimited
/// corpus file. Unknown queries return no hits.
#[derive(Debug, Clone, Default)]
pub struct FixtureCorpus {
    entries: HashMap<String, Vec<SearchHit>>,
}

impl FixtureCorpus {
    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        let mut corpus = Self::default();
        for (line, rec) in read_records::<CorpusRecord>(path)? {
            if corpus.entries.contains_key(&rec.query) {
                tracing::warn!(line, query = %rec.query, "duplicate corpus query; last one wins");
            }
            corpus.entries.insert(rec.query, rec.results);
        }
        Ok(corpus)
    }

    pub fn insert(&mut self, query: impl Into<String>, hits: Vec<SearchHit>) {
        self.entries.insert(query.into(), hits);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl SearchBackend for FixtureCorpus {
    fn search(&self, query: &str, n: usize) -> Result<Vec<SearchHit>, SearchError> {
        match self.entries.get(query) {
            Some(hits) => Ok(hits.iter().take(n).cloned().collect()),
            None => {
                tracing::info!(%query, "query not in fixture corpus");
                Ok(Vec::new())
            }
        }
    }
}

/// Bing Web Search v7 style client: `GET endpoint?q=..&count=n`, results under
/// `webPages.value[] {name, url, snippet}`.
pub struct RemoteSearch {
    cfg: RemoteConfig,
    key: String,
    agent: ureq::Agent,
}

impl RemoteSearch {
    pub fn new(cfg: RemoteConfig) -> Result<Self, SearchError> {
        let key = cfg.api_key()?;
        let agent = cfg.agent();
        Ok(Self { cfg, key, agent })
    }

    fn call(&self, query: &str, n: usize) -> Result<Vec<SearchHit>, BackendError> {
        let mut resp = self
            .agent
            .get(&self.cfg.endpoint_url)
            .query("q", query)
            .query("count", n.to_string())
            .header("Ocp-Apim-Subscription-Key", &self.key)
            .call()
            .map_err(|e| classify_ureq(&e))?;
        let body: Value = resp.body_mut().read_json().map_err(|e| classify_ureq(&e))?;
        Ok(parse_web_pages(&body))
    }
}

fn parse_web_pages(body: &Value) -> Vec<SearchHit> {
    body.pointer("/webPages/value")
        .and_then(Value::as_array)
        .map(|items| {
            items
                .iter()
                .map(|it| SearchHit {
                    title: it["name"].as_str().unwrap_or_default().to_string(),
                    snippet: it["snippet"].as_str().unwrap_or_default().to_string(),
                    url: it["url"].as_str().unwrap_or_default().to_string(),
                })
                .collect()
        })
        .unwrap_or_default()
}

impl SearchBackend for RemoteSearch {
    fn search(&self, query: &str, n: usize) -> Result<Vec<SearchHit>, SearchError> {
        let mut hits = with_retry(self.cfg.retry_policy(), |_| self.call(query, n))
            .map_err(|ex| SearchError::from(ex.last))?;
        hits.truncate(n);
        Ok(hits)
    }
}
