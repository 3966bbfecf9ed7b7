//! Per-run score aggregation and table/CSV rendering.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::dataset::QaItem;
use super::metrics::{exact_match, hit, token_f1};
use crate::pipeline::{PipelineMode, QaRecord, QuestionForm};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("record refers to unknown question id {0:?}")]
    UnknownQuestionId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub f1: f64,
    pub hit: bool,
    pub em: bool,
}

pub fn score_response(response: &str, item: &QaItem) -> QuestionScore {
    QuestionScore {
        f1: token_f1(response, &item.answers),
        hit: hit(response, &item.answers),
        em: exact_match(response, &item.answers),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_tag: String,
    pub method: String,
    pub mode: PipelineMode,
    pub question_form: QuestionForm,
    /// Scored (non-failed) questions.
    pub n_questions: usize,
    pub n_failed: usize,
    /// Percentages in [0, 100].
    pub f1_mean: f64,
    pub hit_rate_pct: f64,
    pub em_pct: f64,
}

/// Display name of a mode, with the question form noted when it is not the
/// mode's usual one.
pub fn method_label(mode: PipelineMode, form: QuestionForm) -> String {
    let base = match mode {
        PipelineMode::Direct => "Direct",
        PipelineMode::Rrr => "Rewriter-Retriever-Reader",
        PipelineMode::RplusRr => "Rewriter+-Retriever-Reader",
        PipelineMode::RplusRfr => "Rewriter+-Retriever-Filter-Reader",
        PipelineMode::MemoryAugmented => "Memory-Augmented",
    };
    if form == mode.default_question_form() {
        base.to_string()
    } else {
        format!("{base} ({} question)", form.as_str())
    }
}

fn index_items(items: &[QaItem]) -> HashMap<&str, &QaItem> {
    items.iter().map(|i| (i.id.as_str(), i)).collect()
}

/// Score one run's records. Failed records are counted but not scored. All
/// records are expected to share a mode and question form; the first one's are
/// reported.
pub fn evaluate_run(
    records: &[QaRecord],
    items: &[QaItem],
    dataset_tag: &str,
) -> Result<EvalReport, EvalError> {
    let index = index_items(items);
    let mut n = 0usize;
    let mut hits = 0usize;
    let mut ems = 0usize;
    let mut f1_sum = 0.0;
    let mut failed = 0usize;
    for r in records {
        let item = index
            .get(r.question_id.as_str())
            .ok_or_else(|| EvalError::UnknownQuestionId(r.question_id.clone()))?;
        if r.failed() {
            failed += 1;
            continue;
        }
        let s = score_response(&r.response, item);
        n += 1;
        hits += s.hit as usize;
        ems += s.em as usize;
        f1_sum += s.f1;
    }
    let pct = |x: f64| if n == 0 { 0.0 } else { 100.0 * x / n as f64 };
    let (mode, form) = records
        .first()
        .map(|r| (r.mode, r.question_form))
        .unwrap_or((PipelineMode::Direct, QuestionForm::Original));
    Ok(EvalReport {
        dataset_tag: dataset_tag.to_string(),
        method: method_label(mode, form),
        mode,
        question_form: form,
        n_questions: n,
        n_failed: failed,
        f1_mean: pct(f1_sum),
        hit_rate_pct: pct(hits as f64),
        em_pct: pct(ems as f64),
    })
}

/// One report per (mode, question form), in order of first appearance.
pub fn evaluate_records(
    records: &[QaRecord],
    items: &[QaItem],
    dataset_tag: &str,
) -> Result<Vec<EvalReport>, EvalError> {
    let mut order: Vec<(PipelineMode, QuestionForm)> = Vec::new();
    let mut groups: HashMap<(PipelineMode, QuestionForm), Vec<QaRecord>> = HashMap::new();
    for r in records {
        let key = (r.mode, r.question_form);
        if !groups.contains_key(&key) {
            order.push(key);
        }
        groups.entry(key).or_default().push(r.clone());
    }
    order
        .into_iter()
        .map(|k| evaluate_run(&groups[&k], items, dataset_tag))
        .collect()
}

/// Space-padded text table.
pub fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let mut out = line(headers.to_vec());
    out.push('\n');
    out.push_str(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-|-"),
    );
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

pub fn render_csv(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    // Writing into memory cannot fail.
    w.write_record(headers).expect("in-memory csv");
    for row in rows {
        w.write_record(row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 input")
}

pub fn fmt2(x: f64) -> String {
    format!("{x:.2}")
}

pub fn fmt2_rows(xs: &[f64]) -> Vec<String> {
    xs.iter().map(|x| fmt2(*x)).collect()
}

pub fn report_table(reports: &[EvalReport]) -> String {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.dataset_tag.clone(),
                r.method.clone(),
                fmt2(r.f1_mean),
                fmt2(r.hit_rate_pct),
                fmt2(r.em_pct),
            ]
        })
        .collect();
    render_table(&["Dataset", "Method", "F1", "Hit Rate", "EM"], &rows)
}

pub fn report_csv(reports: &[EvalReport]) -> String {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.dataset_tag.clone(),
                r.method.clone(),
                fmt2(r.f1_mean),
                fmt2(r.hit_rate_pct),
            ]
        })
        .collect();
    render_csv(&["dataset", "method", "F1", "hit_rate"], &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, answers: &[&str]) -> QaItem {
        QaItem::new(id, "q?", answers.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn rec(id: &str, mode: PipelineMode, response: &str) -> QaRecord {
        QaRecord {
            question_id: id.into(),
            mode,
            question_form: mode.default_question_form(),
            rewritten_question: String::new(),
            queries: vec![],
            response: response.into(),
            time_cost_ms: 0,
            external_knowledge_count: 0,
            memory_knowledge_count: 0,
            irrelevant_knowledge_count: 0,
            reader_knowledge_count: 0,
            back_off_used: false,
            error: None,
        }
    }

    #[test]
    fn single_perfect_record() {
        let items = [item("1", &["1943"])];
        let r = evaluate_run(&[rec("1", PipelineMode::Direct, "1943")], &items, "toy").unwrap();
        assert_eq!((r.f1_mean, r.hit_rate_pct, r.em_pct), (100.0, 100.0, 100.0));
        assert_eq!(r.n_questions, 1);
    }

    #[test]
    fn two_modes_two_rows() {
        let items = [item("1", &["paris"]), item("2", &["rome"])];
        let records = [
            rec("1", PipelineMode::Direct, "paris"),
            rec("2", PipelineMode::Direct, "no idea"),
            rec("1", PipelineMode::RplusRfr, "It is Paris."),
            rec("2", PipelineMode::RplusRfr, "Rome"),
        ];
        let reports = evaluate_records(&records, &items, "toy").unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].hit_rate_pct, 50.0);
        assert_eq!(reports[1].hit_rate_pct, 100.0);
        assert_eq!(reports[1].em_pct, 50.0);
        let csv = report_csv(&reports);
        assert_eq!(
            csv.lines().next().unwrap(),
            "dataset,method,F1,hit_rate"
        );
        assert!(csv.contains("toy,Rewriter+-Retriever-Filter-Reader,"));
        assert!(report_table(&reports).lines().nth(3).unwrap().contains("100.00"));
    }

    #[test]
    fn unknown_id_is_an_error() {
        let err = evaluate_run(&[rec("9", PipelineMode::Direct, "x")], &[item("1", &["a"])], "t");
        assert_eq!(err, Err(EvalError::UnknownQuestionId("9".into())));
    }

    #[test]
    fn failed_records_not_scored() {
        let mut bad = rec("2", PipelineMode::Direct, "");
        bad.error = Some("boom".into());
        let r = evaluate_run(
            &[rec("1", PipelineMode::Direct, "a1"), bad],
            &[item("1", &["a1"]), item("2", &["b"])],
            "t",
        )
        .unwrap();
        assert_eq!((r.n_questions, r.n_failed, r.hit_rate_pct), (1, 1, 100.0));
    }

    #[test]
    fn csv_quotes_when_needed() {
        let s = render_csv(&["a"], &[vec!["x,\"y\"".into()]]);
        assert_eq!(s, "a\n\"x,\"\"y\"\"\"\n");
    }

    #[test]
    fn method_labels_note_question_form() {
        assert_eq!(method_label(PipelineMode::Direct, QuestionForm::Original), "Direct");
        assert_eq!(
            method_label(PipelineMode::Direct, QuestionForm::Rewritten),
            "Direct (rewritten question)"
        );
    }
}
