use serde::{Deserialize, Serialize};

use crate::fingerprint::fnv1a64;

/// Where a knowledge instance came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    External {
        query_index: usize,
        /// 1-based position in that query's result list.
        rank: usize,
        url: String,
    },
    Memory,
}

/// Three-way NLI verdict of knowledge against a question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NliLabel {
    Entailment,
    Contradiction,
    Neutral,
}

impl NliLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            NliLabel::Entailment => "entailment",
            NliLabel::Contradiction => "contradiction",
            NliLabel::Neutral => "neutral",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("knowledge instance {0} is empty")]
pub struct EmptyField(pub &'static str);

/// A title-content pair flowing through retrieval, filtering, caching and
/// reading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeInstance {
    pub id: String,
    pub title: String,
    pub content: String,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nli_label: Option<NliLabel>,
}

/// Stable id over title and content.
pub fn knowledge_id(title: &str, content: &str) -> String {
    let mut bytes = Vec::with_capacity(title.len() + content.len() + 1);
    bytes.extend_from_slice(title.as_bytes());
    bytes.push(0x1f);
    bytes.extend_from_slice(content.as_bytes());
    format!("{:016x}", fnv1a64(&bytes))
}

impl KnowledgeInstance {
    pub fn new(
        title: impl Into<String>,
        content: impl Into<String>,
        source: Source,
    ) -> Result<Self, EmptyField> {
        let title = title.into().trim().to_string();
        let content = content.into().trim().to_string();
        if title.is_empty() {
            return Err(EmptyField("title"));
        }
        if content.is_empty() {
            return Err(EmptyField("content"));
        }
        Ok(Self {
            id: knowledge_id(&title, &content),
            title,
            content,
            source,
            nli_label: None,
        })
    }

    pub fn is_memory(&self) -> bool {
        matches!(self.source, Source::Memory)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_depends_on_title_and_content_only() {
        let a = KnowledgeInstance::new("T", "c", Source::Memory).unwrap();
        let b = KnowledgeInstance::new(
            " T ",
            "c",
            Source::External {
                query_index: 2,
                rank: 1,
                url: "u".into(),
            },
        )
        .unwrap();
        assert_eq!(a.id, b.id);
        assert_ne!(a.id, KnowledgeInstance::new("T", "d", Source::Memory).unwrap().id);
        // The separator keeps ("ab","c") and ("a","bc") apart.
        assert_ne!(knowledge_id("ab", "c"), knowledge_id("a", "bc"));
    }

    #[test]
    fn empty_fields_rejected() {
        assert_eq!(
            KnowledgeInstance::new(" ", "c", Source::Memory).unwrap_err(),
            EmptyField("title")
        );
        assert_eq!(
            KnowledgeInstance::new("t", "", Source::Memory).unwrap_err(),
            EmptyField("content")
        );
    }
}
