//! Question rewriting with multi-query generation.
//!
//! One LLM call turns an original question into a clarified question plus up to
//! `max_queries` search queries. The reply format is the clarified question
//! followed by each query, all separated by a literal `**`.

use serde::{Deserialize, Serialize};

use crate::llm::{Gateway, GatewayError};

pub const QUERY_DELIMITER: &str = "**";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginalQuestion {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_tag: Option<String>,
}

impl OriginalQuestion {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            dataset_tag: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteResult {
    pub rewritten_question: String,
    pub queries: Vec<String>,
    pub used_fallback: bool,
}

impl RewriteResult {
    /// The original question used as both rewritten question and sole query.
    pub fn fallback(question: &str) -> Self {
        Self {
            rewritten_question: question.to_string(),
            queries: vec![question.to_string()],
            used_fallback: true,
        }
    }

    /// Inverse of [`parse_rewrite_output`] for well-formed results.
    pub fn serialize(&self) -> String {
        let mut out = self.rewritten_question.clone();
        for q in &self.queries {
            out.push_str(QUERY_DELIMITER);
            out.push_str(q);
        }
        out
    }
}

pub const DEFAULT_REWRITE_INSTRUCTION: &str = "Your task is to transform a potentially colloquial or jargon-heavy [Original Question] into a semantically enhanced Rewritten Question with a clear intention. Additionally, generating several search-friendly Queries that can help find relevant information for answering the question. You can consider the provided [Examples] and response following the [Format].";

pub const DEFAULT_REWRITE_EXAMPLES: &str = "Original Question: who sang the song that plays over the ending of the shawshank movie\n\
Output: Which singer performed the song played during the closing scene of the 1994 film The Shawshank Redemption?**The Shawshank Redemption ending song**The Shawshank Redemption 1994 soundtrack closing credits**song played at the end of The Shawshank Redemption singer";

pub const DEFAULT_REWRITE_FORMAT: &str = "{rewritten question}**{query1}**{query2}**{query3}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewriterConfig {
    pub max_queries: usize,
    /// Few-shot block, tailored per dataset.
    pub examples_text: String,
    pub instruction_text: String,
    pub format_text: String,
}

impl Default for RewriterConfig {
    fn default() -> Self {
        Self {
            max_queries: 3,
            examples_text: DEFAULT_REWRITE_EXAMPLES.to_string(),
            instruction_text: DEFAULT_REWRITE_INSTRUCTION.to_string(),
            format_text: DEFAULT_REWRITE_FORMAT.to_string(),
        }
    }
}

/// Prompt with `[Instruction]`, `[Original Question]`, `[Examples]` and
/// `[Format]` sections in that order.
pub fn build_rewrite_prompt(question: &str, cfg: &RewriterConfig) -> String {
    format!(
        "[Instruction]: {}\n\n[Original Question]:\n{}\n\n[Examples]:\n{}\n\n[Format]:\n{}",
        cfg.instruction_text.trim(),
        question.trim(),
        cfg.examples_text.trim(),
        cfg.format_text.trim()
    )
}

/// Split a reply on `**`. The first segment is the rewritten question; the
/// rest become queries after trimming, dropping empties, case-insensitive
/// dedup (first occurrence kept) and truncation to `max_queries`.
///
/// Returns `None` when the rewritten question is empty or no query survives.
pub fn parse_rewrite_output(raw: &str, max_queries: usize) -> Option<RewriteResult> {
    let mut parts = raw.split(QUERY_DELIMITER);
    let rewritten = parts.next()?.trim();
    if rewritten.is_empty() {
        return None;
    }
    let mut seen: Vec<String> = Vec::new();
    let mut queries = Vec::new();
    for part in parts {
        let q = part.trim();
        if q.is_empty() {
            continue;
        }
        let key = q.to_lowercase();
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        queries.push(q.to_string());
    }
    queries.truncate(max_queries);
    if queries.is_empty() {
        return None;
    }
    Some(RewriteResult {
        rewritten_question: rewritten.to_string(),
        queries,
        used_fallback: false,
    })
}

/// Clarify `question` and generate search queries with one LLM call. Malformed
/// replies yield [`RewriteResult::fallback`]; only gateway errors escape.
pub fn rewrite(
    gateway: &Gateway,
    question: &OriginalQuestion,
    cfg: &RewriterConfig,
) -> Result<RewriteResult, GatewayError> {
    let max_queries = cfg.max_queries.max(1);
    let prompt = build_rewrite_prompt(&question.text, cfg);
    let reply = gateway.complete(&gateway.request("rewrite", prompt))?;
    Ok(match parse_rewrite_output(&reply.text, max_queries) {
        Some(r) => r,
        None => {
            tracing::warn!(question = %question.id, "unparseable rewrite output; using fallback");
            RewriteResult::fallback(&question.text)
        }
    })
}

/// Single-query baseline: same prompt, but only the first query is kept and the
/// original question is retained for reading.
pub fn rewrite_single_query(
    gateway: &Gateway,
    question: &OriginalQuestion,
    cfg: &RewriterConfig,
) -> Result<RewriteResult, GatewayError> {
    let single = RewriterConfig {
        max_queries: 1,
        ..cfg.clone()
    };
    let mut result = rewrite(gateway, question, &single)?;
    result.rewritten_question = question.text.clone();
    Ok(result)
}
