//! Batch studies built on the pipeline: the τ sweep, the snippet plateau and
//! the rewrite × filter ablation grid.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AblationSetting, KnowledgeSetting, Pipeline, PipelineMode, QaRecord, QuestionForm, RunOptions, SetupError};
use crate::eval::{
    answer_recall, fmt2_rows, render_csv, render_table, score_response, snippet_precision, QaItem,
};
use crate::reservoir::{Reservoir, TriggerConfig};
use crate::retriever::{arrange, search_all, ArrangementOrder};
use crate::rewriter::rewrite;

fn questions(pipeline: &Pipeline, items: &[QaItem]) -> Vec<crate::rewriter::OriginalQuestion> {
    let tag = pipeline.config().dataset_tag.as_str();
    items.iter().map(|i| i.to_question(Some(tag))).collect()
}

/// (hit rate %, F1 %) over the successful records.
fn quality(records: &[QaRecord], items: &[QaItem]) -> (f64, f64) {
    let index: HashMap<&str, &QaItem> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    let scores: Vec<_> = records
        .iter()
        .filter(|r| !r.failed())
        .filter_map(|r| index.get(r.question_id.as_str()).map(|i| score_response(&r.response, i)))
        .collect();
    if scores.is_empty() {
        return (0.0, 0.0);
    }
    let n = scores.len() as f64;
    (
        100.0 * scores.iter().filter(|s| s.hit).count() as f64 / n,
        100.0 * scores.iter().map(|s| s.f1).sum::<f64>() / n,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: f64,
    pub theta: usize,
    pub n_questions: usize,
    pub n_failed: usize,
    pub time_cost_s: f64,
    pub external_knowledge: f64,
    pub memory_knowledge: f64,
    pub irrelevant_knowledge: f64,
    pub hit_rate_pct: f64,
}

/// Memory-augmented runs over one τ per row. Every row starts from its own copy
/// of `seed` and leaves it untouched, so rows differ only in τ.
pub fn sweep_tau(
    pipeline: &Pipeline,
    items: &[QaItem],
    seed: &Reservoir,
    grid: &[f64],
    theta: usize,
) -> Result<Vec<SweepRow>, SetupError> {
    let qs = questions(pipeline, items);
    let mut rows = Vec::with_capacity(grid.len());
    for &tau in grid {
        let trigger = TriggerConfig {
            tau,
            theta,
            ..pipeline.config().trigger
        };
        trigger
            .validate()
            .map_err(|e| SetupError::Config(super::ConfigError::Invalid(e)))?;
        let opts = RunOptions {
            mode: PipelineMode::MemoryAugmented,
            question_form: None,
            trigger,
            update_reservoir: false,
        };
        let mut reservoir = seed.clone();
        let batch = pipeline.run_batch(&qs, &opts, Some(&mut reservoir))?;
        let (hit_rate_pct, _) = quality(&batch.records, items);
        let a = batch.aggregate;
        rows.push(SweepRow {
            tau,
            theta,
            n_questions: a.n_questions,
            n_failed: a.n_failed,
            time_cost_s: a.time_cost_ms / 1000.0,
            external_knowledge: a.external_knowledge,
            memory_knowledge: a.memory_knowledge,
            irrelevant_knowledge: a.irrelevant_knowledge,
            hit_rate_pct,
        });
    }
    Ok(rows)
}

const SWEEP_HEADERS: [&str; 6] = [
    "tau",
    "time_cost_s",
    "external_knowledge",
    "memory_knowledge",
    "irrelevant_knowledge",
    "hit_rate",
];

fn sweep_cells(rows: &[SweepRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let mut cells = vec![format!("{:.1}", r.tau)];
            cells.extend(fmt2_rows(&[
                r.time_cost_s,
                r.external_knowledge,
                r.memory_knowledge,
                r.irrelevant_knowledge,
                r.hit_rate_pct,
            ]));
            cells
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    render_csv(&SWEEP_HEADERS, &sweep_cells(rows))
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    render_table(
        &["τ", "Time Cost (s)", "External Knowledge", "Memory Knowledge", "Irrelevant Knowledge", "Hit Rate (%)"],
        &sweep_cells(rows),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauRow {
    pub snippet_count: usize,
    pub order: ArrangementOrder,
    pub answer_recall: f64,
    pub snippet_precision: f64,
}

/// Answer Recall and Snippet Precision as the number of snippets given to the
/// reader grows from 1 to `max_snippets`, for each arrangement order. Queries
/// come from the rewriter; each retrieves `retrieval.snippet_top_n` results, so
/// both orders see the same multiset once `max_snippets` covers them all.
/// Questions whose rewrite or search fails are left out with a warning.
pub fn plateau_study(
    pipeline: &Pipeline,
    items: &[QaItem],
    max_snippets: usize,
    orders: &[ArrangementOrder],
) -> Result<Vec<PlateauRow>, SetupError> {
    if max_snippets == 0 {
        return Err(SetupError::Config(super::ConfigError::Invalid(
            "max snippets must be at least 1".into(),
        )));
    }
    let qs = questions(pipeline, items);
    let retrieved: Vec<_> = qs
        .par_iter()
        .zip(items.par_iter())
        .filter_map(|(q, item)| {
            let r = rewrite(pipeline.gateway(), q, &pipeline.config().rewriter)
                .map_err(|e| tracing::warn!(question = %q.id, "rewrite failed: {e}"))
                .ok()?;
            let groups = search_all(
                pipeline.search_backend(),
                &r.queries,
                pipeline.config().retrieval.snippet_top_n,
            )
                .map_err(|e| tracing::warn!(question = %q.id, "search failed: {e}"))
                .ok()?;
            Some((groups, item))
        })
        .collect();

    let mut rows = Vec::new();
    for &order in orders {
        for count in 1..=max_snippets {
            let n = retrieved.len().max(1) as f64;
            let (mut recall, mut precision) = (0.0, 0.0);
            for (groups, item) in &retrieved {
                let ks = arrange(groups, order, count);
                recall += answer_recall(&ks, &item.answers);
                precision += snippet_precision(&ks, &item.answers);
            }
            rows.push(PlateauRow {
                snippet_count: count,
                order,
                answer_recall: recall / n,
                snippet_precision: precision / n,
            });
        }
    }
    Ok(rows)
}

pub fn plateau_csv(rows: &[PlateauRow]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.snippet_count.to_string(),
                r.order.as_str().to_string(),
                format!("{:.4}", r.answer_recall),
                format!("{:.4}", r.snippet_precision),
            ]
        })
        .collect();
    render_csv(&["snippet_count", "order", "answer_recall", "snippet_precision"], &cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub dataset: String,
    pub question: QuestionForm,
    pub knowledge: KnowledgeSetting,
    pub n_questions: usize,
    pub f1: f64,
    pub hit_rate_pct: f64,
}

/// Run every ablation setting and score it. Returns the rows and all records.
pub fn ablation(
    pipeline: &Pipeline,
    items: &[QaItem],
    settings: &[AblationSetting],
) -> Result<(Vec<AblationRow>, Vec<QaRecord>), SetupError> {
    let qs = questions(pipeline, items);
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for s in settings {
        let opts = RunOptions {
            question_form: Some(s.question),
            ..pipeline.options(s.mode)
        };
        let batch = pipeline.run_batch(&qs, &opts, None)?;
        let (hit_rate_pct, f1) = quality(&batch.records, items);
        rows.push(AblationRow {
            dataset: pipeline.config().dataset_tag.clone(),
            question: s.question,
            knowledge: s.mode.knowledge_setting(),
            n_questions: batch.aggregate.n_questions,
            f1,
            hit_rate_pct,
        });
        all.extend(batch.records);
    }
    Ok((rows, all))
}

fn knowledge_cell(k: KnowledgeSetting) -> &'static str {
    match k {
        KnowledgeSetting::None => "\\",
        KnowledgeSetting::All => "All",
        KnowledgeSetting::Filtered => "Filtered",
    }
}

fn question_cell(q: QuestionForm) -> &'static str {
    match q {
        QuestionForm::Original => "Original",
        QuestionForm::Rewritten => "Rewritten",
    }
}

fn ablation_cells(rows: &[AblationRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let mut cells = vec![
                r.dataset.clone(),
                question_cell(r.question).to_string(),
                knowledge_cell(r.knowledge).to_string(),
            ];
            cells.extend(fmt2_rows(&[r.f1, r.hit_rate_pct]));
            cells
        })
        .collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    render_csv(&["dataset", "question", "knowledge", "F1", "hit_rate"], &ablation_cells(rows))
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    render_table(&["Dataset", "Question", "Knowledge", "F1", "Hit Rate"], &ablation_cells(rows))
}
