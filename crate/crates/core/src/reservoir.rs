//! Memory knowledge reservoir: a title-keyed cache of retrieved knowledge and
//! the popularity-based retrieval trigger.
//!
//! Pop(q) = |{k ∈ K : S(q, title(k)) ≥ τ}|; a query is within the knowledge
//! boundary when Pop(q) ≥ θ.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, Embedder, EmbeddingError, EmbeddingVector};
use crate::jsonl::{read_records, write_records, JsonlError};
use crate::retriever::{EmptyField, KnowledgeInstance, Source};

#[derive(Debug, thiserror::Error)]
pub enum ReservoirError {
    #[error(transparent)]
    EmptyField(#[from] EmptyField),
    #[error("embedding failed: {0}")]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirEntry {
    pub title: String,
    pub content: String,
    pub title_embedding: EmbeddingVector,
    pub inserted_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriggerConfig {
    pub tau: f64,
    pub theta: usize,
    pub max_memory_instances_per_query: usize,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self {
            tau: 0.6,
            theta: 3,
            max_memory_instances_per_query: 10,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(format!("tau must be in [0, 1], got {}", self.tau));
        }
        if self.theta == 0 {
            return Err("theta must be at least 1".into());
        }
        if self.max_memory_instances_per_query == 0 {
            return Err("max_memory_instances_per_query must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityReport {
    pub query: String,
    pub pop: usize,
    pub within_boundary: bool,
    /// Sorted by similarity descending, fresher entries first on ties.
    pub matched_titles: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsertOutcome {
    Inserted,
    Replaced,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoredEntry {
    title: String,
    content: String,
    seq: u64,
}

/// Case-insensitive key for a title.
pub fn title_key(title: &str) -> String {
    title.trim().to_lowercase()
}

#[derive(Clone)]
pub struct Reservoir {
    embedder: Arc<dyn Embedder>,
    entries: Vec<ReservoirEntry>,
    index: HashMap<String, usize>,
    next_seq: u64,
}

impl std::fmt::Debug for Reservoir {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Reservoir")
            .field("entries", &self.entries.len())
            .field("next_seq", &self.next_seq)
            .finish()
    }
}

impl Reservoir {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        Self {
            embedder,
            entries: Vec::new(),
            index: HashMap::new(),
            next_seq: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, title: &str) -> Option<&ReservoirEntry> {
        self.index.get(&title_key(title)).map(|&i| &self.entries[i])
    }

    /// Entries in insertion-slot order (not sequence order).
    pub fn entries(&self) -> &[ReservoirEntry] {
        &self.entries
    }

    pub fn upsert(&mut self, title: &str, content: &str) -> Result<UpsertOutcome, ReservoirError> {
        let seq = self.next_seq;
        let outcome = self.upsert_with_seq(title, content, seq)?;
        self.next_seq += 1;
        Ok(outcome)
    }

    fn upsert_with_seq(
        &mut self,
        title: &str,
        content: &str,
        seq: u64,
    ) -> Result<UpsertOutcome, ReservoirError> {
        let title = title.trim();
        let content = content.trim();
        if title.is_empty() {
            return Err(EmptyField("title").into());
        }
        if content.is_empty() {
            return Err(EmptyField("content").into());
        }
        let key = title_key(title);
        if let Some(&i) = self.index.get(&key) {
            let e = &mut self.entries[i];
            e.content = content.to_string();
            e.inserted_at = seq;
            return Ok(UpsertOutcome::Replaced);
        }
        let title_embedding = self.embedder.embed(title)?;
        self.index.insert(key, self.entries.len());
        self.entries.push(ReservoirEntry {
            title: title.to_string(),
            content: content.to_string(),
            title_embedding,
            inserted_at: seq,
        });
        Ok(UpsertOutcome::Inserted)
    }

    /// Matching entry indices with similarity ≥ tau, best first.
    fn matches(&self, query: &str, tau: f64) -> Vec<(usize, f64)> {
        let Ok(q) = self.embedder.embed(query) else {
            return Vec::new();
        };
        let mut hits: Vec<(usize, f64)> = self
            .entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| {
                let s = cosine(&q, &e.title_embedding).ok()?;
                (s >= tau).then_some((i, s))
            })
            .collect();
        hits.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then(self.entries[b.0].inserted_at.cmp(&self.entries[a.0].inserted_at))
        });
        hits
    }

    pub fn popularity(&self, query: &str, cfg: &TriggerConfig) -> PopularityReport {
        self.report(query, cfg, &self.matches(query, cfg.tau))
    }

    /// Memory-sourced knowledge for `query`, empty outside the boundary.
    pub fn recall_knowledge(&self, query: &str, cfg: &TriggerConfig) -> Vec<KnowledgeInstance> {
        self.recall(cfg, &self.matches(query, cfg.tau))
    }

    /// [`popularity`](Self::popularity) and
    /// [`recall_knowledge`](Self::recall_knowledge) from a single scan.
    pub fn lookup(
        &self,
        query: &str,
        cfg: &TriggerConfig,
    ) -> (PopularityReport, Vec<KnowledgeInstance>) {
        let hits = self.matches(query, cfg.tau);
        (self.report(query, cfg, &hits), self.recall(cfg, &hits))
    }

    fn report(&self, query: &str, cfg: &TriggerConfig, hits: &[(usize, f64)]) -> PopularityReport {
        PopularityReport {
            query: query.to_string(),
            pop: hits.len(),
            within_boundary: hits.len() >= cfg.theta,
            matched_titles: hits
                .iter()
                .map(|&(i, s)| (self.entries[i].title.clone(), s))
                .collect(),
        }
    }

    fn recall(&self, cfg: &TriggerConfig, hits: &[(usize, f64)]) -> Vec<KnowledgeInstance> {
        if hits.len() < cfg.theta {
            return Vec::new();
        }
        hits.iter()
            .take(cfg.max_memory_instances_per_query)
            .filter_map(|&(i, _)| {
                let e = &self.entries[i];
                KnowledgeInstance::new(e.title.clone(), e.content.clone(), Source::Memory).ok()
            })
            .collect()
    }

    /// Renumber sequence numbers densely from 0, preserving their order.
    pub fn compact(&mut self) {
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by_key(|&i| self.entries[i].inserted_at);
        for (seq, i) in order.into_iter().enumerate() {
            self.entries[i].inserted_at = seq as u64;
        }
        self.next_seq = self.entries.len() as u64;
    }

    pub fn persist(&self, path: &Path) -> Result<(), ReservoirError> {
        let mut stored: Vec<StoredEntry> = self
            .entries
            .iter()
            .map(|e| StoredEntry {
                title: e.title.clone(),
                content: e.content.clone(),
                seq: e.inserted_at,
            })
            .collect();
        stored.sort_by_key(|s| s.seq);
        write_records(path, &stored)?;
        Ok(())
    }

    pub fn load(path: &Path, embedder: Arc<dyn Embedder>) -> Result<Self, ReservoirError> {
        let mut r = Reservoir::new(embedder);
        for (line, s) in read_records::<StoredEntry>(path)? {
            if r.upsert_with_seq(&s.title, &s.content, s.seq)
                .map_err(|e| JsonlError::format(path, line, e.to_string()))?
                == UpsertOutcome::Replaced
            {
                tracing::warn!(line, title = %s.title, "duplicate reservoir title, later record wins");
            }
            r.next_seq = r.next_seq.max(s.seq + 1);
        }
        Ok(r)
    }

    /// Load `path` when it exists, otherwise start empty.
    pub fn load_or_empty(path: &Path, embedder: Arc<dyn Embedder>) -> Result<Self, ReservoirError> {
        if path.exists() {
            Self::load(path, embedder)
        } else {
            Ok(Self::new(embedder))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashingEmbedder;
    use proptest::prelude::*;

    fn emb() -> Arc<dyn Embedder> {
        Arc::new(HashingEmbedder::new(256, 0))
    }

    #[test]
    fn replacement_semantics() {
        let mut r = Reservoir::new(emb());
        assert_eq!(r.upsert("T", "c1").unwrap(), UpsertOutcome::Inserted);
        assert_eq!(r.upsert("T", "c2").unwrap(), UpsertOutcome::Replaced);
        assert_eq!(r.len(), 1);
        assert_eq!(r.get("T").unwrap().content, "c2");
    }

    #[test]
    fn case_insensitive_key() {
        let mut r = Reservoir::new(emb());
        r.upsert("T", "c").unwrap();
        r.upsert(" t ", "c'").unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.get("t").unwrap().content, "c'");
        assert_eq!(r.get("T").unwrap().title, "T");
    }

    #[test]
    fn distinct_titles_grow() {
        let mut r = Reservoir::new(emb());
        for i in 0..100 {
            r.upsert(&format!("title number {i}"), "c").unwrap();
        }
        assert_eq!(r.len(), 100);
    }

    #[test]
    fn empty_fields_rejected() {
        let mut r = Reservoir::new(emb());
        assert!(matches!(r.upsert("  ", "c"), Err(ReservoirError::EmptyField(_))));
        assert!(matches!(r.upsert("t", ""), Err(ReservoirError::EmptyField(_))));
    }

    #[test]
    fn empty_reservoir_has_zero_pop() {
        let r = Reservoir::new(emb());
        let rep = r.popularity("anything", &TriggerConfig::default());
        assert_eq!(rep.pop, 0);
        assert!(!rep.within_boundary);
    }

    #[test]
    fn self_similarity_is_within_boundary() {
        let mut r = Reservoir::new(emb());
        r.upsert("Barack Obama", "44th president").unwrap();
        let cfg = TriggerConfig { tau: 1.0, theta: 1, ..Default::default() };
        let rep = r.popularity("Barack Obama", &cfg);
        assert!(rep.pop >= 1 && rep.within_boundary);
        assert_eq!(r.recall_knowledge("Barack Obama", &cfg).len(), 1);
    }

    #[test]
    fn recall_outside_boundary_is_empty() {
        let mut r = Reservoir::new(emb());
        r.upsert("alpha", "a").unwrap();
        let cfg = TriggerConfig { tau: 1.0, theta: 2, ..Default::default() };
        assert!(r.recall_knowledge("alpha", &cfg).is_empty());
    }

    #[test]
    fn recall_takes_top_by_similarity_then_freshness() {
        let mut r = Reservoir::new(emb());
        // Twelve titles; "paris" itself and eleven with decreasing overlap.
        let mut titles = vec!["paris".to_string()];
        for i in 0..11 {
            titles.push(format!("paris {}", "x ".repeat(i + 1) + &format!("w{i}")));
        }
        for t in &titles {
            r.upsert(t, &format!("about {t}")).unwrap();
        }
        let cfg = TriggerConfig { tau: 0.0, theta: 1, max_memory_instances_per_query: 10 };
        let got = r.recall_knowledge("paris", &cfg);
        assert_eq!(got.len(), 10);
        assert!(got.iter().all(KnowledgeInstance::is_memory));

        // Sort oracle: similarity descending, then higher sequence first.
        let q = emb().embed("paris").unwrap();
        let mut oracle: Vec<(f64, u64, String)> = r
            .entries()
            .iter()
            .map(|e| (cosine(&q, &e.title_embedding).unwrap(), e.inserted_at, e.title.clone()))
            .filter(|(s, _, _)| *s >= 0.0)
            .collect();
        oracle.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
        let expect: Vec<String> = oracle.into_iter().take(10).map(|t| t.2).collect();
        let got: Vec<String> = got.into_iter().map(|k| k.title).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn ties_prefer_fresher() {
        let mut r = Reservoir::new(emb());
        r.upsert("Alpha Beta", "old").unwrap();
        r.upsert("beta alpha", "new").unwrap();
        let cfg = TriggerConfig { tau: 0.99, theta: 1, max_memory_instances_per_query: 1 };
        assert_eq!(r.recall_knowledge("alpha beta", &cfg)[0].content, "new");
    }

    #[test]
    fn persist_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("res.jsonl");
        let mut r = Reservoir::new(emb());
        r.upsert("One", "first").unwrap();
        r.upsert("Two", "second").unwrap();
        r.upsert("one", "first again").unwrap();
        r.persist(&path).unwrap();
        let loaded = Reservoir::load(&path, emb()).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.get("ONE").unwrap().inserted_at, 2);
        assert_eq!(loaded.get("one").unwrap().content, "first again");

        let again = dir.path().join("res2.jsonl");
        loaded.persist(&again).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());

        let mut next = loaded.clone();
        next.upsert("Three", "third").unwrap();
        assert_eq!(next.get("three").unwrap().inserted_at, 3);
    }

    #[test]
    fn duplicate_lines_later_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("res.jsonl");
        std::fs::write(
            &path,
            "{\"title\":\"A\",\"content\":\"x\",\"seq\":0}\n{\"title\":\"a\",\"content\":\"y\",\"seq\":1}\n",
        )
        .unwrap();
        let r = Reservoir::load(&path, emb()).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.get("A").unwrap().content, "y");
    }

    #[test]
    fn empty_file_and_bad_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(Reservoir::load(&path, emb()).unwrap().is_empty());
        std::fs::write(&path, "{\"title\":\"A\",\"content\":\"x\",\"seq\":0}\nnot json\n").unwrap();
        match Reservoir::load(&path, emb()) {
            Err(ReservoirError::Jsonl(JsonlError::Format { line, .. })) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn compact_renumbers_densely() {
        let mut r = Reservoir::new(emb());
        r.upsert("a", "1").unwrap();
        r.upsert("b", "1").unwrap();
        r.upsert("a", "2").unwrap();
        r.compact();
        assert_eq!(r.get("b").unwrap().inserted_at, 0);
        assert_eq!(r.get("a").unwrap().inserted_at, 1);
    }

    #[test]
    fn trigger_validation() {
        assert!(TriggerConfig::default().validate().is_ok());
        assert!(TriggerConfig { tau: 1.2, ..Default::default() }.validate().is_err());
        assert!(TriggerConfig { theta: 0, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn pop_monotone_in_tau_and_boundary_in_theta(
            titles in proptest::collection::vec("[a-e]{1,3}( [a-e]{1,3}){0,2}", 1..15),
            query in "[a-e]{1,3}( [a-e]{1,3}){0,2}",
            t1 in 0.0f64..1.0, t2 in 0.0f64..1.0, theta in 1usize..5,
        ) {
            let mut r = Reservoir::new(emb());
            for t in &titles { r.upsert(t, "c").unwrap(); }
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = r.popularity(&query, &TriggerConfig { tau: lo, theta, ..Default::default() });
            let b = r.popularity(&query, &TriggerConfig { tau: hi, theta, ..Default::default() });
            prop_assert!(a.pop >= b.pop);
            prop_assert_eq!(a.pop, a.matched_titles.len());
            prop_assert!(a.matched_titles.iter().all(|(_, s)| *s >= lo));
            prop_assert_eq!(a.within_boundary, a.pop >= theta);
            let stricter = r.popularity(&query, &TriggerConfig { tau: lo, theta: theta + 1, ..Default::default() });
            prop_assert!(!stricter.within_boundary || a.within_boundary);
        }

        #[test]
        fn upsert_is_idempotent_apart_from_seq(title in "[a-zA-Z]{1,8}", content in "[a-z]{1,8}") {
            let mut r = Reservoir::new(emb());
            r.upsert(&title, &content).unwrap();
            let before = r.get(&title).unwrap().clone();
            r.upsert(&title, &content).unwrap();
            let after = r.get(&title).unwrap();
            prop_assert_eq!(r.len(), 1);
            prop_assert_eq!(&after.title, &before.title);
            prop_assert_eq!(&after.content, &before.content);
            prop_assert_eq!(&after.title_embedding, &before.title_embedding);
            prop_assert!(after.inserted_at > before.inserted_at);
        }
    }
}
