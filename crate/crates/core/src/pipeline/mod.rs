//! Run modes and batch orchestration.

pub mod config;
pub mod record;
pub mod study;

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::embedding::Embedder;
use crate::filter::filter;
use crate::llm::{ChatBackend, Gateway, GatewayError};
use crate::reader::{answer, assemble_prompt};
use crate::reservoir::{Reservoir, ReservoirError, TriggerConfig};
use crate::retriever::{
    arrange, fetch_and_distill, search, search_all, ArrangementOrder, FixtureCorpus,
    HttpPageSource, KnowledgeInstance, PageFixtures, PageSource, RemoteSearch, SearchBackend,
    SearchError, SearchResultGroup, Source,
};
use crate::retry::BackendError;
use crate::rewriter::{rewrite, rewrite_single_query, OriginalQuestion, RewriteResult};

pub use config::{AblationSetting, ConfigError, RetrievalConfig, RunConfig, SearchConfig};
pub use record::{BatchAggregate, KnowledgeSetting, PipelineMode, QaRecord, QuestionForm};
pub use study::{
    ablation, ablation_csv, ablation_table, plateau_csv, plateau_study, sweep_csv, sweep_table,
    sweep_tau, AblationRow, PlateauRow, SweepRow,
};

/// Setup failures, each naming the component that could not be built.
#[derive(Debug, thiserror::Error)]
pub enum SetupError {
    #[error("llm-gateway: {0}")]
    Gateway(#[from] GatewayError),
    #[error("knowledge-retriever: {0}")]
    Search(#[from] SearchError),
    #[error("knowledge-retriever: {0}")]
    Corpus(#[from] crate::jsonl::JsonlError),
    #[error("embedding-provider: {0}")]
    Embedding(BackendError),
    #[error("memory-reservoir: {0}")]
    Reservoir(#[from] ReservoirError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("pipeline: {0}")]
    Runtime(String),
}

/// Per-run knobs that studies vary without rebuilding the pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub mode: PipelineMode,
    /// Defaults to the mode's own question form.
    pub question_form: Option<QuestionForm>,
    pub trigger: TriggerConfig,
    pub update_reservoir: bool,
}

impl RunOptions {
    pub fn form(&self) -> QuestionForm {
        self.question_form
            .unwrap_or_else(|| self.mode.default_question_form())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub records: Vec<QaRecord>,
    pub aggregate: BatchAggregate,
}

/// Outcome of one question before it becomes a record.
struct Flow {
    rewritten_question: String,
    queries: Vec<String>,
    response: String,
    external: usize,
    memory: usize,
    irrelevant: usize,
    reader_knowledge: usize,
    back_off: bool,
    /// Newly fetched (title, content) pairs for the reservoir.
    upserts: Vec<(String, String)>,
}

#[derive(Debug)]
struct StepError(String);

impl From<GatewayError> for StepError {
    fn from(e: GatewayError) -> Self {
        StepError(format!("llm-gateway: {e}"))
    }
}

impl From<SearchError> for StepError {
    fn from(e: SearchError) -> Self {
        StepError(format!("knowledge-retriever: {e}"))
    }
}

pub struct Pipeline {
    cfg: RunConfig,
    gateway: Gateway,
    search: Arc<dyn SearchBackend>,
    pages: Arc<dyn PageSource>,
    embedder: Arc<dyn Embedder>,
}

impl Pipeline {
    pub fn from_config(cfg: RunConfig) -> Result<Self, SetupError> {
        let backend = cfg.llm.build_backend()?;
        Self::with_chat_backend(cfg, backend)
    }

    /// Build everything from `cfg` except the chat backend.
    pub fn with_chat_backend(
        cfg: RunConfig,
        backend: Arc<dyn ChatBackend>,
    ) -> Result<Self, SetupError> {
        cfg.validate()?;
        let (search, pages): (Arc<dyn SearchBackend>, Arc<dyn PageSource>) = match &cfg.search {
            SearchConfig::Fixture { corpus, pages } => (
                Arc::new(FixtureCorpus::load(corpus)?),
                match pages {
                    Some(p) => Arc::new(PageFixtures::load(p)?),
                    None => Arc::new(PageFixtures::default()),
                },
            ),
            SearchConfig::Remote {
                remote,
                page_timeout_ms,
            } => (
                Arc::new(RemoteSearch::new(remote.clone())?),
                Arc::new(HttpPageSource::new(*page_timeout_ms)),
            ),
        };
        let embedder = cfg.embedding.build().map_err(SetupError::Embedding)?;
        let gateway = Gateway::with_backend(&cfg.llm, backend);
        Ok(Self::new(cfg, gateway, search, pages, embedder))
    }

    pub fn new(
        cfg: RunConfig,
        gateway: Gateway,
        search: Arc<dyn SearchBackend>,
        pages: Arc<dyn PageSource>,
        embedder: Arc<dyn Embedder>,
    ) -> Self {
        Self {
            cfg,
            gateway,
            search,
            pages,
            embedder,
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn search_backend(&self) -> &dyn SearchBackend {
        &*self.search
    }

    pub fn embedder(&self) -> Arc<dyn Embedder> {
        self.embedder.clone()
    }

    /// Options taken straight from the config for `mode`.
    pub fn options(&self, mode: PipelineMode) -> RunOptions {
        RunOptions {
            mode,
            question_form: None,
            trigger: self.cfg.trigger,
            update_reservoir: self.cfg.update_reservoir,
        }
    }

    pub fn empty_reservoir(&self) -> Reservoir {
        Reservoir::new(self.embedder.clone())
    }

    /// Answer one question. Terminal backend failures produce a record with
    /// `error` set; they never panic or abort the batch. The second value holds
    /// the knowledge to write back to the reservoir.
    pub fn run_question(
        &self,
        p: &OriginalQuestion,
        opts: &RunOptions,
        reservoir: Option<&Reservoir>,
    ) -> (QaRecord, Vec<(String, String)>) {
        let start = Instant::now();
        let flow = self.flow(p, opts, reservoir);
        let time_cost_ms = if self.cfg.record_timing {
            start.elapsed().as_millis() as u64
        } else {
            0
        };
        let base = QaRecord {
            question_id: p.id.clone(),
            mode: opts.mode,
            question_form: opts.form(),
            rewritten_question: String::new(),
            queries: Vec::new(),
            response: String::new(),
            time_cost_ms,
            external_knowledge_count: 0,
            memory_knowledge_count: 0,
            irrelevant_knowledge_count: 0,
            reader_knowledge_count: 0,
            back_off_used: false,
            error: None,
        };
        match flow {
            Ok(f) => (
                QaRecord {
                    rewritten_question: f.rewritten_question,
                    queries: f.queries,
                    response: f.response,
                    external_knowledge_count: f.external,
                    memory_knowledge_count: f.memory,
                    irrelevant_knowledge_count: f.irrelevant,
                    reader_knowledge_count: f.reader_knowledge,
                    back_off_used: f.back_off,
                    ..base
                },
                f.upserts,
            ),
            Err(StepError(msg)) => {
                tracing::error!(question = %p.id, "question failed: {msg}");
                (
                    QaRecord {
                        error: Some(msg),
                        ..base
                    },
                    Vec::new(),
                )
            }
        }
    }

    fn flow(
        &self,
        p: &OriginalQuestion,
        opts: &RunOptions,
        reservoir: Option<&Reservoir>,
    ) -> Result<Flow, StepError> {
        let form = opts.form();
        let rewrite_result = match opts.mode {
            PipelineMode::Direct if form == QuestionForm::Original => None,
            PipelineMode::Rrr => Some(rewrite_single_query(
                &self.gateway,
                p,
                &self.cfg.rewriter,
            )?),
            _ => Some(rewrite(&self.gateway, p, &self.cfg.rewriter)?),
        };
        let (rewritten_question, queries) = match &rewrite_result {
            Some(RewriteResult {
                rewritten_question,
                queries,
                ..
            }) => (rewritten_question.clone(), queries.clone()),
            None => (p.text.clone(), Vec::new()),
        };
        let read_question = match form {
            QuestionForm::Original => p.text.as_str(),
            QuestionForm::Rewritten => rewritten_question.as_str(),
        };

        let mut flow = Flow {
            rewritten_question: rewritten_question.clone(),
            queries: queries.clone(),
            response: String::new(),
            external: 0,
            memory: 0,
            irrelevant: 0,
            reader_knowledge: 0,
            back_off: false,
            upserts: Vec::new(),
        };

        let groups = match opts.mode {
            PipelineMode::Direct => Vec::new(),
            PipelineMode::MemoryAugmented => {
                let empty;
                let reservoir = match reservoir {
                    Some(r) => r,
                    None => {
                        empty = self.empty_reservoir();
                        &empty
                    }
                };
                let groups = self.memory_groups(&queries, reservoir, &opts.trigger)?;
                for g in &groups {
                    for k in &g.instances {
                        if k.is_memory() {
                            flow.memory += 1;
                        } else {
                            flow.external += 1;
                            flow.upserts.push((k.title.clone(), k.content.clone()));
                        }
                    }
                }
                groups
            }
            _ => {
                let groups = search_all(&*self.search, &queries, self.cfg.retrieval.snippet_top_n)?;
                flow.external = groups.iter().map(|g| g.instances.len()).sum();
                groups
            }
        };

        let arranged = arrange(&groups, self.order_for(opts.mode), self.cfg.retrieval.knowledge_cap);
        let reader_knowledge = match opts.mode.knowledge_setting() {
            KnowledgeSetting::None => Vec::new(),
            KnowledgeSetting::All => arranged,
            KnowledgeSetting::Filtered => {
                let outcome = filter(&self.gateway, read_question, &arranged, &self.cfg.filter);
                flow.irrelevant = outcome.irrelevant_count();
                flow.back_off = outcome.back_off;
                outcome.retained
            }
        };
        flow.reader_knowledge = reader_knowledge.len();

        let prompt = assemble_prompt(read_question, &reader_knowledge, &self.cfg.reader);
        flow.response = answer(&self.gateway, &prompt)?;
        Ok(flow)
    }

    fn order_for(&self, mode: PipelineMode) -> ArrangementOrder {
        match mode {
            // Multi-query modes interleave so every query reaches the reader.
            PipelineMode::RplusRr | PipelineMode::RplusRfr | PipelineMode::MemoryAugmented => {
                ArrangementOrder::Mixed
            }
            _ => self.cfg.retrieval.order,
        }
    }

    /// One group per query: recalled memory when the query is within the
    /// knowledge boundary, otherwise distilled pages from an external search.
    fn memory_groups(
        &self,
        queries: &[String],
        reservoir: &Reservoir,
        trigger: &TriggerConfig,
    ) -> Result<Vec<SearchResultGroup>, StepError> {
        queries
            .par_iter()
            .enumerate()
            .map(|(i, q)| {
                let (report, recalled) = reservoir.lookup(q, trigger);
                if report.within_boundary {
                    return Ok(SearchResultGroup {
                        query: q.clone(),
                        query_index: i,
                        instances: recalled,
                    });
                }
                let hits = search(&*self.search, q, i, self.cfg.retrieval.page_top_n)?;
                let instances = hits
                    .instances
                    .into_par_iter()
                    .map(|snippet| self.distill_hit(snippet, q))
                    .collect();
                Ok(SearchResultGroup {
                    query: q.clone(),
                    query_index: i,
                    instances,
                })
            })
            .collect()
    }

    /// Replace a hit's snippet with the query-relevant passages of its page.
    /// Falls back to the snippet when the page cannot be fetched or distilled.
    fn distill_hit(&self, snippet: KnowledgeInstance, query: &str) -> KnowledgeInstance {
        let Source::External { url, .. } = &snippet.source else {
            return snippet;
        };
        match fetch_and_distill(&*self.pages, url, query, &self.cfg.bm25) {
            Ok(page) => {
                let title = page.title.unwrap_or_else(|| snippet.title.clone());
                KnowledgeInstance::new(title, page.content, snippet.source.clone())
                    .unwrap_or(snippet)
            }
            Err(e) => {
                tracing::warn!(%url, "page unavailable, keeping snippet: {e}");
                snippet
            }
        }
    }

    /// Run every question. Memory-augmented runs that update the reservoir go
    /// one question at a time so each answer sees the previous write-backs;
    /// everything else runs concurrently on `workers` threads. Records come
    /// back in input order either way.
    pub fn run_batch(
        &self,
        questions: &[OriginalQuestion],
        opts: &RunOptions,
        reservoir: Option<&mut Reservoir>,
    ) -> Result<BatchResult, SetupError> {
        let mut local;
        let reservoir: Option<&mut Reservoir> = match (opts.mode, reservoir) {
            (PipelineMode::MemoryAugmented, None) => {
                local = self.empty_reservoir();
                Some(&mut local)
            }
            (_, r) => r,
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.workers)
            .build()
            .map_err(|e| SetupError::Runtime(e.to_string()))?;

        let records = match reservoir {
            Some(res) if opts.mode == PipelineMode::MemoryAugmented && opts.update_reservoir => {
                pool.install(|| {
                    let mut out = Vec::with_capacity(questions.len());
                    for p in questions {
                        let (record, upserts) = self.run_question(p, opts, Some(res));
                        for (title, content) in upserts {
                            if let Err(e) = res.upsert(&title, &content) {
                                tracing::warn!(%title, "reservoir upsert skipped: {e}");
                            }
                        }
                        out.push(record);
                    }
                    out
                })
            }
            res => {
                let res = res.map(|r| &*r);
                pool.install(|| {
                    questions
                        .par_iter()
                        .map(|p| self.run_question(p, opts, res).0)
                        .collect()
                })
            }
        };
        let aggregate = BatchAggregate::from_records(opts.mode, &records);
        Ok(BatchResult { records, aggregate })
    }
}
