//! Datasets, answer metrics and result tables.

pub mod dataset;
pub mod metrics;
pub mod report;

pub use dataset::{
    convert_file, convert_value, load_dataset, write_dataset, LoadMode, LoadedDataset, QaItem,
    SourceFormat,
};
pub use metrics::{answer_recall, exact_match, hit, normalize, snippet_precision, token_f1};
pub use report::{
    evaluate_records, evaluate_run, fmt2, fmt2_rows, method_label, render_csv, render_table, report_csv,
    report_table, score_response, EvalError, EvalReport, QuestionScore,
};
