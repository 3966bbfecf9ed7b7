//! QA datasets: the line-delimited `{"id","question","answers"}` schema plus
//! converters from the public release formats.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::jsonl::{write_records, JsonlError};
use crate::rewriter::OriginalQuestion;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub id: String,
    pub question: String,
    pub answers: Vec<String>,
}

impl QaItem {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        answers: Vec<String>,
    ) -> Result<Self, String> {
        let item = Self {
            id: id.into(),
            question: question.into(),
            answers,
        };
        item.validate()?;
        Ok(item)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.question.trim().is_empty() {
            return Err(format!("item {}: empty question", self.id));
        }
        if self.answers.is_empty() {
            return Err(format!("item {}: empty answers", self.id));
        }
        if self.answers.iter().any(|a| a.trim().is_empty()) {
            return Err(format!("item {}: empty answer item", self.id));
        }
        Ok(())
    }

    pub fn to_question(&self, dataset_tag: Option<&str>) -> OriginalQuestion {
        let mut q = OriginalQuestion::new(self.id.clone(), self.question.clone());
        q.dataset_tag = dataset_tag.map(str::to_string);
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadMode {
    /// The first malformed line aborts the load.
    Strict,
    /// Malformed lines are reported and skipped.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedDataset {
    pub items: Vec<QaItem>,
    /// (line, message) for each skipped line under lenient loading.
    pub skipped: Vec<(usize, String)>,
}

pub fn load_dataset(path: &Path, mode: LoadMode) -> Result<LoadedDataset, JsonlError> {
    let text = std::fs::read_to_string(path).map_err(|e| JsonlError::io(path, e))?;
    let mut items = Vec::new();
    let mut skipped = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<QaItem>(line)
            .map_err(|e| e.to_string())
            .and_then(|item| item.validate().map(|_| item))
            .and_then(|item| {
                if ids.insert(item.id.clone()) {
                    Ok(item)
                } else {
                    Err(format!("duplicate id {}", item.id))
                }
            });
        match (parsed, mode) {
            (Ok(item), _) => items.push(item),
            (Err(msg), LoadMode::Strict) => return Err(JsonlError::format(path, idx + 1, msg)),
            (Err(msg), LoadMode::Lenient) => {
                tracing::warn!(line = idx + 1, "skipping dataset line: {msg}");
                skipped.push((idx + 1, msg));
            }
        }
    }
    Ok(LoadedDataset { items, skipped })
}

pub fn write_dataset(path: &Path, items: &[QaItem]) -> Result<(), JsonlError> {
    write_records(path, items)
}

/// Public release formats accepted by [`convert_file`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    /// Open-domain NQ: `{"question", "answer": [..]}`, ids assigned by position.
    Nq,
    /// PopQA: `possible_answers` is a JSON-encoded list inside a string.
    PopQa,
    /// AmbigNQ: answers gathered from every annotation.
    AmbigNq,
    /// HotpotQA: `{"_id", "question", "answer"}`.
    HotpotQa,
    /// 2WikiMultihopQA: same shape as HotpotQA.
    TwoWiki,
}

impl std::str::FromStr for SourceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nq" => Ok(Self::Nq),
            "popqa" | "pop_qa" => Ok(Self::PopQa),
            "ambignq" | "ambig_nq" => Ok(Self::AmbigNq),
            "hotpotqa" | "hotpot_qa" => Ok(Self::HotpotQa),
            "2wiki" | "two_wiki" | "2wikimqa" => Ok(Self::TwoWiki),
            other => Err(format!("unknown dataset format {other:?}")),
        }
    }
}

fn str_field<'a>(v: &'a Value, key: &str) -> Result<&'a str, String> {
    v.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| format!("missing string field {key:?}"))
}

fn id_field(v: &Value, key: &str) -> Result<String, String> {
    match v.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        _ => Err(format!("missing id field {key:?}")),
    }
}

fn string_list(v: &Value) -> Vec<String> {
    match v {
        Value::String(s) => vec![s.clone()],
        Value::Array(xs) => xs.iter().flat_map(string_list).collect(),
        _ => Vec::new(),
    }
}

fn dedup(answers: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    answers
        .into_iter()
        .map(|a| a.trim().to_string())
        .filter(|a| !a.is_empty() && seen.insert(a.clone()))
        .collect()
}

pub fn convert_value(format: SourceFormat, position: usize, v: &Value) -> Result<QaItem, String> {
    let (id, answers) = match format {
        SourceFormat::Nq => (
            v.get("id")
                .map(|_| id_field(v, "id"))
                .unwrap_or_else(|| Ok(format!("nq-{position}")))?,
            string_list(v.get("answer").ok_or("missing field \"answer\"")?),
        ),
        SourceFormat::PopQa => {
            let raw = v.get("possible_answers").ok_or("missing field \"possible_answers\"")?;
            let answers = match raw {
                Value::String(s) => serde_json::from_str::<Vec<String>>(s)
                    .map_err(|e| format!("possible_answers: {e}"))?,
                other => string_list(other),
            };
            (id_field(v, "id")?, answers)
        }
        SourceFormat::AmbigNq => {
            let anns = v
                .get("annotations")
                .and_then(Value::as_array)
                .ok_or("missing array \"annotations\"")?;
            let mut answers = Vec::new();
            for a in anns {
                if let Some(ans) = a.get("answer") {
                    answers.extend(string_list(ans));
                }
                for pair in a.get("qaPairs").and_then(Value::as_array).into_iter().flatten() {
                    answers.extend(pair.get("answer").map(string_list).unwrap_or_default());
                }
            }
            (id_field(v, "id")?, answers)
        }
        SourceFormat::HotpotQa | SourceFormat::TwoWiki => (
            id_field(v, "_id")?,
            string_list(v.get("answer").ok_or("missing field \"answer\"")?),
        ),
    };
    QaItem::new(id, str_field(v, "question")?.trim(), dedup(answers))
}

/// Convert a release file, accepting either a JSON array or one object per line.
pub fn convert_file(format: SourceFormat, path: &Path) -> Result<Vec<QaItem>, JsonlError> {
    let text = std::fs::read_to_string(path).map_err(|e| JsonlError::io(path, e))?;
    if text.trim_start().starts_with('[') {
        let values: Vec<Value> =
            serde_json::from_str(&text).map_err(|e| JsonlError::format(path, 1, e.to_string()))?;
        return values
            .iter()
            .enumerate()
            .map(|(i, v)| convert_value(format, i, v).map_err(|m| JsonlError::format(path, 1, format!("element {i}: {m}"))))
            .collect();
    }
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value =
            serde_json::from_str(line).map_err(|e| JsonlError::format(path, idx + 1, e.to_string()))?;
        out.push(
            convert_value(format, out.len(), &v).map_err(|m| JsonlError::format(path, idx + 1, m))?,
        );
    }
    Ok(out)
}
