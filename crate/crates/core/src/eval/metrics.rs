//! Answer scoring. Every comparison runs on normalized text: lowercase, no
//! punctuation, no standalone articles, single spaces.
//!
//! An answer item that normalizes to the empty string never matches anything.

use std::collections::HashMap;

use crate::retriever::KnowledgeInstance;

pub fn normalize(text: &str) -> String {
    let lowered = text.to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    stripped
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn normalized_answers<S: AsRef<str>>(answers: &[S]) -> Vec<String> {
    answers
        .iter()
        .map(|a| normalize(a.as_ref()))
        .filter(|a| !a.is_empty())
        .collect()
}

/// Any normalized answer is a substring of the normalized response.
pub fn hit<S: AsRef<str>>(response: &str, answers: &[S]) -> bool {
    let r = normalize(response);
    normalized_answers(answers).iter().any(|a| r.contains(a.as_str()))
}

pub fn exact_match<S: AsRef<str>>(response: &str, answers: &[S]) -> bool {
    let r = normalize(response);
    normalized_answers(answers).iter().any(|a| *a == r)
}

fn f1_tokens(pred: &[&str], gold: &[&str]) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / pred.len() as f64;
    let r = common as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// Token-level F1 against the best-matching answer.
pub fn token_f1<S: AsRef<str>>(response: &str, answers: &[S]) -> f64 {
    let r = normalize(response);
    let pred: Vec<&str> = r.split_whitespace().collect();
    answers
        .iter()
        .map(|a| {
            let g = normalize(a.as_ref());
            let gold: Vec<&str> = g.split_whitespace().collect();
            f1_tokens(&pred, &gold)
        })
        .fold(0.0, f64::max)
}

fn instance_text(k: &KnowledgeInstance) -> String {
    normalize(&format!("{} {}", k.title, k.content))
}

/// Fraction of answer items found anywhere in the knowledge.
pub fn answer_recall<S: AsRef<str>>(knowledge: &[KnowledgeInstance], answers: &[S]) -> f64 {
    if answers.is_empty() {
        return 0.0;
    }
    let texts: Vec<String> = knowledge.iter().map(instance_text).collect();
    let found = answers
        .iter()
        .filter(|a| {
            let a = normalize(a.as_ref());
            !a.is_empty() && texts.iter().any(|t| t.contains(a.as_str()))
        })
        .count();
    found as f64 / answers.len() as f64
}

/// Fraction of instances that contain any answer item. Empty knowledge is 0.
pub fn snippet_precision<S: AsRef<str>>(knowledge: &[KnowledgeInstance], answers: &[S]) -> f64 {
    if knowledge.is_empty() {
        return 0.0;
    }
    let answers = normalized_answers(answers);
    let containing = knowledge
        .iter()
        .filter(|k| {
            let t = instance_text(k);
            answers.iter().any(|a| t.contains(a.as_str()))
        })
        .count();
    containing as f64 / knowledge.len() as f64
}
