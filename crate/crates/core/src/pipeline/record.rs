use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    /// Reader only.
    Direct,
    /// Single-query rewrite, retrieve, read with the original question.
    Rrr,
    /// Multi-query rewrite, retrieve, read with the rewritten question.
    RplusRr,
    /// As `RplusRr` with the knowledge filter before reading.
    RplusRfr,
    /// As `RplusRfr` with the reservoir consulted per query.
    MemoryAugmented,
}

impl PipelineMode {
    pub const ALL: [PipelineMode; 5] = [
        PipelineMode::Direct,
        PipelineMode::Rrr,
        PipelineMode::RplusRr,
        PipelineMode::RplusRfr,
        PipelineMode::MemoryAugmented,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineMode::Direct => "direct",
            PipelineMode::Rrr => "rrr",
            PipelineMode::RplusRr => "rplus_rr",
            PipelineMode::RplusRfr => "rplus_rfr",
            PipelineMode::MemoryAugmented => "memory_augmented",
        }
    }

    /// Question the reader sees when the run does not override it.
    pub fn default_question_form(self) -> QuestionForm {
        match self {
            PipelineMode::Direct | PipelineMode::Rrr => QuestionForm::Original,
            _ => QuestionForm::Rewritten,
        }
    }

    pub fn knowledge_setting(self) -> KnowledgeSetting {
        match self {
            PipelineMode::Direct => KnowledgeSetting::None,
            PipelineMode::Rrr | PipelineMode::RplusRr => KnowledgeSetting::All,
            PipelineMode::RplusRfr | PipelineMode::MemoryAugmented => KnowledgeSetting::Filtered,
        }
    }
}

impl std::fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PipelineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PipelineMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionForm {
    Original,
    Rewritten,
}

impl QuestionForm {
    pub fn as_str(self) -> &'static str {
        match self {
            QuestionForm::Original => "original",
            QuestionForm::Rewritten => "rewritten",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeSetting {
    None,
    All,
    Filtered,
}

impl KnowledgeSetting {
    pub fn as_str(self) -> &'static str {
        match self {
            KnowledgeSetting::None => "none",
            KnowledgeSetting::All => "all",
            KnowledgeSetting::Filtered => "filtered",
        }
    }
}

/// One answered (or failed) question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub question_id: String,
    pub mode: PipelineMode,
    pub question_form: QuestionForm,
    pub rewritten_question: String,
    pub queries: Vec<String>,
    pub response: String,
    pub time_cost_ms: u64,
    /// Retrieved instances before arrangement and deduplication.
    pub external_knowledge_count: usize,
    pub memory_knowledge_count: usize,
    pub irrelevant_knowledge_count: usize,
    /// Instances placed in the reader prompt.
    pub reader_knowledge_count: usize,
    pub back_off_used: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl QaRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Means of the resource metrics over successful records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchAggregate {
    pub mode: PipelineMode,
    pub n_questions: usize,
    pub n_failed: usize,
    pub time_cost_ms: f64,
    pub external_knowledge: f64,
    pub memory_knowledge: f64,
    pub irrelevant_knowledge: f64,
}

impl BatchAggregate {
    /// Sums are accumulated as integers, so the result does not depend on
    /// record order.
    pub fn from_records(mode: PipelineMode, records: &[QaRecord]) -> Self {
        let ok: Vec<&QaRecord> = records.iter().filter(|r| !r.failed()).collect();
        let n = ok.len();
        let mean = |f: &dyn Fn(&QaRecord) -> u64| {
            if n == 0 {
                0.0
            } else {
                ok.iter().map(|r| f(r)).sum::<u64>() as f64 / n as f64
            }
        };
        Self {
            mode,
            n_questions: n,
            n_failed: records.len() - n,
            time_cost_ms: mean(&|r| r.time_cost_ms),
            external_knowledge: mean(&|r| r.external_knowledge_count as u64),
            memory_knowledge: mean(&|r| r.memory_knowledge_count as u64),
            irrelevant_knowledge: mean(&|r| r.irrelevant_knowledge_count as u64),
        }
    }
}
