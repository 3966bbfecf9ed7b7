//! Okapi BM25 over sentence-window passages of a single page.
//!
//! score(q, d) = Σ_{t ∈ q} IDF(t) · tf·(k1+1) / (tf + k1·(1 − b + b·|d|/avglen))
//! IDF(t)      = ln((N − df + 0.5)/(df + 0.5) + 1)
//!
//! Query terms are treated as a set: a term repeated in the query counts once.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::embedding::word_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub passage_window_sentences: usize,
    pub passages_kept: usize,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: 1.5,
            b: 0.75,
            passage_window_sentences: 3,
            passages_kept: 5,
        }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.k1 > 0.0) {
            return Err(format!("bm25 k1 must be > 0, got {}", self.k1));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(format!("bm25 b must be in [0, 1], got {}", self.b));
        }
        if self.passage_window_sentences == 0 || self.passages_kept == 0 {
            return Err("bm25 window and kept counts must be positive".into());
        }
        Ok(())
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    word_tokens(text)
}

/// Document frequencies and average length over one page's passages.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    doc_freq: HashMap<String, usize>,
    passages: usize,
    avg_len: f64,
}

impl CorpusStats {
    pub fn from_passages<S: AsRef<str>>(passages: &[Vec<S>]) -> Self {
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        let mut total = 0usize;
        for p in passages {
            total += p.len();
            let uniq: HashSet<&str> = p.iter().map(AsRef::as_ref).collect();
            for t in uniq {
                *doc_freq.entry(t.to_string()).or_default() += 1;
            }
        }
        let avg_len = if passages.is_empty() {
            0.0
        } else {
            total as f64 / passages.len() as f64
        };
        Self {
            doc_freq,
            passages: passages.len(),
            avg_len,
        }
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    pub fn passage_count(&self) -> usize {
        self.passages
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }
}

pub fn idf(passages: usize, df: usize) -> f64 {
    let n = passages as f64;
    let df = df as f64;
    ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
}

/// Contribution of one term with frequency `tf` in a passage of length `len`.
pub fn term_weight(idf: f64, tf: f64, len: f64, avg_len: f64, params: &Bm25Params) -> f64 {
    if tf <= 0.0 || avg_len <= 0.0 {
        return 0.0;
    }
    let norm = params.k1 * (1.0 - params.b + params.b * len / avg_len);
    idf * tf * (params.k1 + 1.0) / (tf + norm)
}

pub fn bm25_score<Q: AsRef<str>, P: AsRef<str>>(
    query_tokens: &[Q],
    passage: &[P],
    stats: &CorpusStats,
    params: &Bm25Params,
) -> f64 {
    if query_tokens.is_empty() || passage.is_empty() {
        return 0.0;
    }
    let mut tf: HashMap<&str, usize> = HashMap::new();
    for t in passage {
        *tf.entry(t.as_ref()).or_default() += 1;
    }
    let mut seen = HashSet::new();
    let mut score = 0.0;
    for q in query_tokens {
        let q = q.as_ref();
        if !seen.insert(q) {
            continue;
        }
        let f = tf.get(q).copied().unwrap_or(0);
        if f == 0 {
            continue;
        }
        let w = idf(stats.passages, stats.doc_freq(q));
        score += term_weight(w, f as f64, passage.len() as f64, stats.avg_len, params);
    }
    score
}
