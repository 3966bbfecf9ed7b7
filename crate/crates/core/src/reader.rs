//! Reading prompt assembly and the final answer call.

use serde::{Deserialize, Serialize};

use crate::llm::{Gateway, GatewayError};
use crate::retriever::KnowledgeInstance;

pub const MAX_READER_KNOWLEDGE: usize = 30;

// Artifact-authored defaults; override per dataset in the run config.
pub const DEFAULT_READER_INSTRUCTION: &str = "Answer the [Question] concisely. If knowledge is given, use it where it is relevant; otherwise answer from your own knowledge.";
pub const DEFAULT_READER_EXAMPLES: &str = "Question: Who wrote the novel Frankenstein?\nAnswer: Mary Shelley";
pub const DEFAULT_READER_FORMAT: &str = "Answer: {a short answer}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReaderConfig {
    pub instruction_text: String,
    pub examples_text: String,
    pub format_text: String,
    pub knowledge_cap: usize,
}

impl Default for ReaderConfig {
    fn default() -> Self {
        Self {
            instruction_text: DEFAULT_READER_INSTRUCTION.into(),
            examples_text: DEFAULT_READER_EXAMPLES.into(),
            format_text: DEFAULT_READER_FORMAT.into(),
            knowledge_cap: MAX_READER_KNOWLEDGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReaderPrompt {
    pub instruction_text: String,
    pub question_text: String,
    pub knowledge_block: Vec<KnowledgeInstance>,
    pub examples_text: String,
    pub format_text: String,
}

/// Build the prompt, truncating knowledge to the cap (never above 30). The
/// knowledge order is kept exactly as given.
pub fn assemble_prompt(
    question: &str,
    knowledge: &[KnowledgeInstance],
    cfg: &ReaderConfig,
) -> ReaderPrompt {
    let cap = cfg.knowledge_cap.min(MAX_READER_KNOWLEDGE);
    ReaderPrompt {
        instruction_text: cfg.instruction_text.trim().to_string(),
        question_text: question.trim().to_string(),
        knowledge_block: knowledge.iter().take(cap).cloned().collect(),
        examples_text: cfg.examples_text.trim().to_string(),
        format_text: cfg.format_text.trim().to_string(),
    }
}

impl ReaderPrompt {
    /// Sections: instruction, question, knowledge (omitted when empty),
    /// examples, format.
    pub fn serialize(&self) -> String {
        let mut out = format!(
            "[Instruction]: {}\n\n[Question]:\n{}\n\n",
            self.instruction_text, self.question_text
        );
        if !self.knowledge_block.is_empty() {
            out.push_str("[Knowledge]:\n");
            let blocks: Vec<String> = self
                .knowledge_block
                .iter()
                .map(|k| format!("Title: {}\nContent: {}", k.title, k.content))
                .collect();
            out.push_str(&blocks.join("\n\n"));
            out.push_str("\n\n");
        }
        out.push_str(&format!(
            "[Examples]:\n{}\n\n[Format]:\n{}",
            self.examples_text, self.format_text
        ));
        out
    }
}

pub fn answer(gateway: &Gateway, prompt: &ReaderPrompt) -> Result<String, GatewayError> {
    let reply = gateway.complete(&gateway.request("reader", prompt.serialize()))?;
    Ok(reply.text.trim().to_string())
}
