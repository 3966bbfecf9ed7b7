//! Run manifest. Relative paths are resolved against the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::record::{PipelineMode, QuestionForm};
use crate::embedding::EmbeddingConfig;
use crate::filter::FilterConfig;
use crate::llm::GatewayConfig;
use crate::reader::{ReaderConfig, MAX_READER_KNOWLEDGE};
use crate::remote::RemoteConfig;
use crate::reservoir::TriggerConfig;
use crate::retriever::{ArrangementOrder, Bm25Params};
use crate::rewriter::RewriterConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
pub enum SearchConfig {
    /// Offline corpus keyed by exact query text, plus optional HTML pages.
    Fixture {
        corpus: PathBuf,
        #[serde(default)]
        pages: Option<PathBuf>,
    },
    Remote {
        #[serde(flatten)]
        remote: RemoteConfig,
        #[serde(default = "default_page_timeout_ms")]
        page_timeout_ms: u64,
    },
}

fn default_page_timeout_ms() -> u64 {
    10_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    /// Snippets per query in snippet mode.
    pub snippet_top_n: usize,
    /// Pages fetched and distilled per query in memory-augmented mode.
    pub page_top_n: usize,
    pub knowledge_cap: usize,
    pub order: ArrangementOrder,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            snippet_top_n: 10,
            page_top_n: 5,
            knowledge_cap: MAX_READER_KNOWLEDGE,
            order: ArrangementOrder::Mixed,
        }
    }
}

/// One row of the ablation grid: a mode fixes the knowledge setting, the
/// question form picks what the reader (and filter) see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSetting {
    pub mode: PipelineMode,
    pub question: QuestionForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_mode")]
    pub mode: PipelineMode,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default = "default_tag")]
    pub dataset_tag: String,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// When false every time cost is recorded as 0, making record files
    /// byte-reproducible.
    #[serde(default = "yes")]
    pub record_timing: bool,
    #[serde(default)]
    pub reservoir: Option<PathBuf>,
    /// Write newly fetched knowledge back to the reservoir after each answer.
    #[serde(default = "yes")]
    pub update_reservoir: bool,
    pub llm: GatewayConfig,
    pub search: SearchConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub bm25: Bm25Params,
    #[serde(default)]
    pub trigger: TriggerConfig,
    #[serde(default)]
    pub rewriter: RewriterConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub reader: ReaderConfig,
    #[serde(default)]
    pub ablation: Vec<AblationSetting>,
}

fn default_mode() -> PipelineMode {
    PipelineMode::RplusRfr
}
fn default_tag() -> String {
    "dataset".into()
}
fn default_workers() -> usize {
    4
}
fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.llm.script_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.dataset.as_mut() {
            fix(p);
        }
        if let Some(p) = self.reservoir.as_mut() {
            fix(p);
        }
        if let SearchConfig::Fixture { corpus, pages } = &mut self.search {
            fix(corpus);
            if let Some(p) = pages.as_mut() {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        let r = &self.retrieval;
        if r.snippet_top_n == 0 || r.page_top_n == 0 {
            return bad("retrieval top-n values must be at least 1".into());
        }
        if r.knowledge_cap == 0 || r.knowledge_cap > MAX_READER_KNOWLEDGE {
            return bad(format!(
                "retrieval.knowledge_cap must be in 1..={MAX_READER_KNOWLEDGE}"
            ));
        }
        if self.rewriter.max_queries == 0 {
            return bad("rewriter.max_queries must be at least 1".into());
        }
        self.bm25.validate().map_err(ConfigError::Invalid)?;
        self.trigger.validate().map_err(ConfigError::Invalid)?;
        for a in &self.ablation {
            if !matches!(
                a.mode,
                PipelineMode::Direct | PipelineMode::RplusRr | PipelineMode::RplusRfr
            ) {
                return bad(format!(
                    "ablation mode must be direct, rplus_rr or rplus_rfr, got {}",
                    a.mode
                ));
            }
        }
        Ok(())
    }
}
