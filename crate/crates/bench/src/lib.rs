//! Synthetic inputs shared by the benchmarks.

use std::sync::Arc;

use ragpipe_core::retriever::{KnowledgeInstance, SearchResultGroup, Source};
use ragpipe_core::{HashingEmbedder, Reservoir};

const WORDS: &[&str] = &[
    "river", "castle", "film", "album", "city", "war", "king", "queen", "bridge", "opera",
    "novel", "election", "team", "founder", "company", "station", "island", "museum",
];

/// Deterministic pseudo-random word sequence; `salt` picks the stream.
pub fn words(n: usize, salt: u64) -> String {
    let mut x = salt.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    (0..n)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            WORDS[(x % WORDS.len() as u64) as usize]
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Plain-text page of `sentences` twelve-word sentences.
pub fn page(sentences: usize) -> String {
    (0..sentences)
        .map(|i| format!("{}.", words(12, i as u64)))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn result_groups(queries: usize, per_query: usize) -> Vec<SearchResultGroup> {
    (0..queries)
        .map(|qi| SearchResultGroup {
            query: format!("query {qi}"),
            query_index: qi,
            instances: (0..per_query)
                .map(|r| {
                    KnowledgeInstance::new(
                        format!("result {qi}-{r}"),
                        words(20, (qi * 1000 + r) as u64),
                        Source::External {
                            query_index: qi,
                            rank: r + 1,
                            url: format!("http://example.org/{qi}/{r}"),
                        },
                    )
                    .expect("non-empty")
                })
                .collect(),
        })
        .collect()
}

/// Reservoir with `n` distinct titles under the default hashing embedder.
pub fn reservoir(n: usize) -> Reservoir {
    let mut r = Reservoir::new(Arc::new(HashingEmbedder::default()));
    for i in 0..n {
        r.upsert(&format!("{} {i}", words(4, i as u64)), "cached content")
            .expect("non-empty");
    }
    r
}
