//! NLI-framed knowledge filtering.
//!
//! Each knowledge instance is the premise; the hypothesis states that it helps
//! answer the question. Only `entailment` survives. When nothing survives the
//! outcome signals back-off and the caller reads without knowledge.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::llm::{Gateway, GatewayError};
use crate::retriever::{KnowledgeInstance, NliLabel};

/// Explanation recorded when a reply cannot be parsed.
pub const PARSE_FAILURE: &str = "PARSE_FAILURE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisStrength {
    /// Knowledge must contain the answer outright. Suits single-hop sets.
    #[default]
    Strong,
    /// Knowledge need only help. Suits multi-hop sets.
    Weak,
}

pub const DEFAULT_STRONG_HYPOTHESIS: &str =
    "The [Knowledge] contains direct and explicit answer information for the [Question]";
pub const DEFAULT_WEAK_HYPOTHESIS: &str =
    "The [Knowledge] contains information that possibly aids in answering the [Question]";
pub const DEFAULT_NLI_INSTRUCTION: &str = "Your task is to solve the NLI problem: given the premise in [Knowledge] and the hypothesis that \"{hypothesis}\". You should classify the response as entailment, contradiction, or neutral.";
pub const DEFAULT_NLI_FORMAT: &str = "{The explanation.}**{The NLI result.}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub strength: HypothesisStrength,
    pub strong_hypothesis: String,
    pub weak_hypothesis: String,
    /// `{hypothesis}` is replaced by the active hypothesis text.
    pub instruction_template: String,
    pub format_text: String,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            strength: HypothesisStrength::Strong,
            strong_hypothesis: DEFAULT_STRONG_HYPOTHESIS.into(),
            weak_hypothesis: DEFAULT_WEAK_HYPOTHESIS.into(),
            instruction_template: DEFAULT_NLI_INSTRUCTION.into(),
            format_text: DEFAULT_NLI_FORMAT.into(),
        }
    }
}

impl FilterConfig {
    pub fn hypothesis(&self) -> &str {
        match self.strength {
            HypothesisStrength::Strong => &self.strong_hypothesis,
            HypothesisStrength::Weak => &self.weak_hypothesis,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliJudgment {
    pub explanation: String,
    pub label: NliLabel,
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub retained: Vec<KnowledgeInstance>,
    pub discarded: Vec<KnowledgeInstance>,
    pub back_off: bool,
}

impl FilterOutcome {
    /// Number of instances filtered out.
    pub fn irrelevant_count(&self) -> usize {
        self.discarded.len()
    }
}

pub fn build_nli_prompt(question: &str, knowledge: &KnowledgeInstance, cfg: &FilterConfig) -> String {
    let instruction = cfg.instruction_template.replace("{hypothesis}", cfg.hypothesis());
    format!(
        "[Instruction]: {}\n\n[Question]:\n{}\n\n[Knowledge]:\n{}: {}\n\n[Format]:\n{}",
        instruction.trim(),
        question.trim(),
        knowledge.title,
        knowledge.content,
        cfg.format_text.trim()
    )
}

fn label_from_word(word: &str) -> Option<NliLabel> {
    let w = word
        .trim_matches(|c: char| !c.is_alphabetic())
        .to_lowercase();
    match w.as_str() {
        "entailment" | "entailed" | "entails" => Some(NliLabel::Entailment),
        "contradiction" | "contradict" | "contradicts" => Some(NliLabel::Contradiction),
        "neutral" => Some(NliLabel::Neutral),
        _ => None,
    }
}

/// Parse `{explanation}**{label}`, splitting on the last `**`. Anything else is
/// neutral with explanation [`PARSE_FAILURE`].
pub fn parse_judgment(raw: &str) -> NliJudgment {
    let parsed = raw
        .rsplit_once("**")
        .and_then(|(expl, label)| label_from_word(label).map(|l| (expl.trim().to_string(), l)));
    match parsed {
        Some((explanation, label)) => NliJudgment {
            explanation,
            label,
            raw_text: raw.to_string(),
        },
        None => NliJudgment {
            explanation: PARSE_FAILURE.to_string(),
            label: NliLabel::Neutral,
            raw_text: raw.to_string(),
        },
    }
}

pub fn judge(
    gateway: &Gateway,
    question: &str,
    knowledge: &KnowledgeInstance,
    cfg: &FilterConfig,
) -> Result<NliJudgment, GatewayError> {
    let prompt = build_nli_prompt(question, knowledge, cfg);
    let reply = gateway.complete(&gateway.request("filter", prompt))?;
    Ok(parse_judgment(&reply.text))
}

/// Judge every instance concurrently and partition by label, preserving input
/// order on both sides. A failed judge call counts as neutral.
pub fn filter(
    gateway: &Gateway,
    question: &str,
    knowledge: &[KnowledgeInstance],
    cfg: &FilterConfig,
) -> FilterOutcome {
    let labels: Vec<NliLabel> = knowledge
        .par_iter()
        .map(|k| match judge(gateway, question, k, cfg) {
            Ok(j) => j.label,
            Err(e) => {
                tracing::error!(id = %k.id, "judge failed, discarding: {e}");
                NliLabel::Neutral
            }
        })
        .collect();
    let mut retained = Vec::new();
    let mut discarded = Vec::new();
    for (k, label) in knowledge.iter().zip(labels) {
        let mut k = k.clone();
        k.nli_label = Some(label);
        if label == NliLabel::Entailment {
            retained.push(k);
        } else {
            discarded.push(k);
        }
    }
    FilterOutcome {
        back_off: retained.is_empty(),
        retained,
        discarded,
    }
}
