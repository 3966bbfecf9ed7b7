//! Retrieval-augmented question answering: query rewriting, multi-query web
//! retrieval, NLI knowledge filtering, a title-keyed memory cache with a
//! popularity trigger, and the evaluation harness around them.

pub mod embedding;
pub mod eval;
pub mod filter;
pub mod fingerprint;
pub mod jsonl;
pub mod llm;
pub mod pipeline;
pub mod reader;
pub mod remote;
pub mod reservoir;
pub mod retriever;
pub mod retry;
pub mod rewriter;

pub use embedding::{cosine, Embedder, EmbeddingConfig, EmbeddingVector, HashingEmbedder};
pub use eval::{load_dataset, LoadMode, QaItem};
pub use filter::{FilterConfig, FilterOutcome, HypothesisStrength, NliJudgment};
pub use llm::{ChatBackend, Gateway, GatewayConfig, GatewayError, ScriptedMock};
pub use pipeline::{
    BatchResult, Pipeline, PipelineMode, QaRecord, QuestionForm, RunConfig, RunOptions, SetupError,
};
pub use reader::{ReaderConfig, ReaderPrompt};
pub use reservoir::{PopularityReport, Reservoir, TriggerConfig};
pub use retriever::{ArrangementOrder, KnowledgeInstance, NliLabel, Source};
pub use rewriter::{OriginalQuestion, RewriteResult, RewriterConfig};
