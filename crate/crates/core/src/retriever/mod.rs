//! Knowledge retrieval: per-query search, optional full-page distillation,
//! and arrangement of multi-query results under a global cap.

pub mod arrange;
pub mod bm25;
pub mod distill;
pub mod instance;
pub mod search;

pub use arrange::{arrange, ArrangementOrder};
pub use bm25::{bm25_score, Bm25Params, CorpusStats};
pub use distill::{
    fetch_and_distill, DistillError, DistilledPage, HttpPageSource, PageFixtures, PageSource,
};
pub use instance::{knowledge_id, EmptyField, KnowledgeInstance, NliLabel, Source};
pub use search::{
    search, search_all, FixtureCorpus, RemoteSearch, SearchBackend, SearchError, SearchHit,
    SearchResultGroup,
};
