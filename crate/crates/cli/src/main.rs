//! `ragpipe`: run pipelines, score them, and run the τ sweep, plateau and
//! ablation studies. Exit codes: 0 success, 1 setup failure, 2 some questions
//! failed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ragpipe_core::eval::{
    evaluate_records, load_dataset, report_csv, report_table, LoadMode, QaItem,
};
use ragpipe_core::jsonl::{read_records, write_records};
use ragpipe_core::llm::{BackendKind, ChatBackend, RecordingBackend, ScriptedMock};
use ragpipe_core::pipeline::{
    ablation, ablation_csv, ablation_table, plateau_csv, plateau_study, sweep_csv, sweep_table,
    sweep_tau, BatchResult, Pipeline, PipelineMode, QaRecord, RunConfig,
};
use ragpipe_core::reservoir::{Reservoir, TriggerConfig};
use ragpipe_core::retriever::ArrangementOrder;
use ragpipe_core::OriginalQuestion;

#[derive(Debug, Parser)]
#[command(name = "ragpipe", version, about = "Retrieval-augmented QA pipelines and studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Answer a dataset with one pipeline mode (or the config's ablation grid).
    Run(RunArgs),
    /// Score a records file against a dataset.
    Eval(EvalArgs),
    /// Memory-augmented runs over a grid of similarity thresholds.
    SweepTau(SweepArgs),
    /// Answer Recall / Snippet Precision as the snippet count grows.
    PlateauStudy(PlateauArgs),
    /// Inspect or compact a reservoir file.
    #[command(subcommand)]
    Reservoir(ReservoirCommand),
    /// Run against the configured backend and save every exchange as a mock script.
    RecordMocks(RecordArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Run manifest (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Dataset file; overrides the manifest's `dataset`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Question-level worker threads; overrides the manifest.
    #[arg(long)]
    workers: Option<usize>,
    /// Skip malformed dataset lines instead of failing.
    #[arg(long)]
    lenient: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// direct, rrr, rplus_rr, rplus_rfr or memory_augmented; defaults to the manifest.
    #[arg(long)]
    mode: Option<PipelineMode>,
    /// Reservoir file read and updated in memory-augmented mode.
    #[arg(long)]
    reservoir: Option<PathBuf>,
    /// Run every `[[ablation]]` setting from the manifest.
    #[arg(long, conflicts_with = "mode")]
    ablation: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// records.jsonl written by `run`.
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Dataset column of the report.
    #[arg(long, default_value = "dataset")]
    tag: String,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Seed reservoir; every τ starts from a fresh copy and never writes back.
    #[arg(long)]
    reservoir: Option<PathBuf>,
    /// Comma-separated τ values in [0, 1].
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.4,0.6,0.8,1.0")]
    grid: Vec<f64>,
    /// Popularity threshold θ.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    theta: u32,
}

#[derive(Debug, Args)]
struct PlateauArgs {
    #[command(flatten)]
    common: Common,
    /// Largest arranged snippet count.
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u32).range(1..))]
    max_snippets: u32,
    /// Comma-separated arrangement orders.
    #[arg(long, value_delimiter = ',', default_value = "sequential,mixed")]
    orders: Vec<ArrangementOrder>,
}

#[derive(Debug, Subcommand)]
enum ReservoirCommand {
    /// Summarize a reservoir; with --query, show its popularity report.
    Inspect {
        path: PathBuf,
        /// Query whose popularity report to show.
        #[arg(long)]
        query: Option<String>,
        #[arg(long, default_value_t = 0.6)]
        tau: f64,
        #[arg(long, default_value_t = 3)]
        theta: usize,
        /// Manifest whose embedding settings to use.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Matched titles to list.
        #[arg(long, default_value_t = 10)]
        limit: usize,
    },
    /// Drop superseded duplicates and renumber sequence numbers.
    Compact {
        path: PathBuf,
        /// Write here instead of replacing the input.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RecordArgs {
    #[command(flatten)]
    common: Common,
    /// direct, rrr, rplus_rr, rplus_rfr or memory_augmented; defaults to the manifest.
    #[arg(long)]
    mode: Option<PipelineMode>,
}

/// Whether any question failed.
enum Outcome {
    Clean,
    Partial,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();

    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::SweepTau(a) => cmd_sweep(a),
        Command::PlateauStudy(a) => cmd_plateau(a),
        Command::Reservoir(c) => cmd_reservoir(c),
        Command::RecordMocks(a) => cmd_record(a),
    };
    match result {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(d) = &common.dataset {
        cfg.dataset = Some(d.clone());
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_items(cfg: &RunConfig, lenient: bool) -> Result<Vec<QaItem>> {
    let path = cfg
        .dataset
        .as_ref()
        .context("no dataset given (use --dataset or set `dataset` in the config)")?;
    let mode = if lenient { LoadMode::Lenient } else { LoadMode::Strict };
    let loaded = load_dataset(path, mode).context("eval-harness: loading dataset")?;
    for (line, msg) in &loaded.skipped {
        eprintln!("warning: {}:{line}: skipped: {msg}", path.display());
    }
    if loaded.items.is_empty() {
        bail!("eval-harness: dataset {} has no questions", path.display());
    }
    Ok(loaded.items)
}

fn to_questions(cfg: &RunConfig, items: &[QaItem]) -> Vec<OriginalQuestion> {
    items
        .iter()
        .map(|i| i.to_question(Some(&cfg.dataset_tag)))
        .collect()
}

/// Build the pipeline. A scripted mock is kept so its misses can be reported.
fn build_pipeline(cfg: &RunConfig) -> Result<(Pipeline, Option<Arc<ScriptedMock>>)> {
    let (backend, mock): (Arc<dyn ChatBackend>, _) = match cfg.llm.backend_kind {
        BackendKind::ScriptedMock => {
            let path = cfg
                .llm
                .script_path
                .as_ref()
                .context("llm-gateway: scripted_mock requires script_path")?;
            let mock = Arc::new(ScriptedMock::load(path).context("llm-gateway")?);
            (mock.clone(), Some(mock))
        }
        BackendKind::RemoteHttp => (cfg.llm.build_backend().context("llm-gateway")?, None),
    };
    Ok((Pipeline::with_chat_backend(cfg.clone(), backend)?, mock))
}

fn out_path(out: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out.join(name))
}

fn write_text(out: &Path, name: &str, text: &str) -> Result<()> {
    let p = out_path(out, name)?;
    std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
}

fn report_misses(mock: &Option<Arc<ScriptedMock>>, out: &Path) -> Result<()> {
    if let Some(m) = mock {
        let misses = m.misses();
        if !misses.is_empty() {
            eprintln!("warning: {} prompt(s) were not in the mock script", misses.len());
            write_records(&out_path(out, "misses.jsonl")?, &misses)?;
        }
    }
    Ok(())
}

fn outcome(records: &[QaRecord]) -> Outcome {
    let failed = records.iter().filter(|r| r.failed()).count();
    if failed > 0 {
        eprintln!("{failed} of {} question(s) failed", records.len());
        Outcome::Partial
    } else {
        Outcome::Clean
    }
}

fn write_reports(out: &Path, records: &[QaRecord], items: &[QaItem], tag: &str) -> Result<()> {
    let reports = evaluate_records(records, items, tag)?;
    write_text(out, "report.csv", &report_csv(&reports))?;
    write_text(out, "report.txt", &report_table(&reports))?;
    print!("{}", report_table(&reports));
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<Outcome> {
    let mut cfg = load_config(&a.common)?;
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    if let Some(r) = &a.reservoir {
        cfg.reservoir = Some(r.clone());
    }
    let (pipeline, mock) = build_pipeline(&cfg)?;
    let items = load_items(&cfg, a.common.lenient)?;
    let out = &a.common.out;

    if a.ablation {
        if cfg.ablation.is_empty() {
            bail!("pipeline: --ablation needs [[ablation]] entries in the config");
        }
        let (rows, records) = ablation(&pipeline, &items, &cfg.ablation)?;
        write_records(&out_path(out, "records.jsonl")?, &records)?;
        write_text(out, "ablation.csv", &ablation_csv(&rows))?;
        write_text(out, "ablation.txt", &ablation_table(&rows))?;
        print!("{}", ablation_table(&rows));
        report_misses(&mock, out)?;
        return Ok(outcome(&records));
    }

    let questions = to_questions(&cfg, &items);
    let opts = pipeline.options(cfg.mode);
    let batch: BatchResult = if cfg.mode == PipelineMode::MemoryAugmented {
        let mut reservoir = match &cfg.reservoir {
            Some(p) => Reservoir::load_or_empty(p, pipeline.embedder())
                .context("memory-reservoir")?,
            None => pipeline.empty_reservoir(),
        };
        let batch = pipeline.run_batch(&questions, &opts, Some(&mut reservoir))?;
        if let (Some(p), true) = (&cfg.reservoir, cfg.update_reservoir) {
            reservoir.persist(p).context("memory-reservoir")?;
        }
        batch
    } else {
        pipeline.run_batch(&questions, &opts, None)?
    };

    write_records(&out_path(out, "records.jsonl")?, &batch.records)?;
    write_text(
        out,
        "aggregate.json",
        &(serde_json::to_string_pretty(&batch.aggregate)? + "\n"),
    )?;
    write_reports(out, &batch.records, &items, &cfg.dataset_tag)?;
    report_misses(&mock, out)?;
    Ok(outcome(&batch.records))
}

fn cmd_eval(a: EvalArgs) -> Result<Outcome> {
    let records: Vec<QaRecord> = read_records(&a.records)
        .context("eval-harness: reading records")?
        .into_iter()
        .map(|(_, r)| r)
        .collect();
    let items = load_dataset(&a.dataset, LoadMode::Strict)
        .context("eval-harness: loading dataset")?
        .items;
    write_reports(&a.out, &records, &items, &a.tag)?;
    Ok(Outcome::Clean)
}

fn cmd_sweep(a: SweepArgs) -> Result<Outcome> {
    let mut cfg = load_config(&a.common)?;
    cfg.mode = PipelineMode::MemoryAugmented;
    if let Some(r) = &a.reservoir {
        cfg.reservoir = Some(r.clone());
    }
    for &tau in &a.grid {
        TriggerConfig {
            tau,
            ..cfg.trigger
        }
        .validate()
        .map_err(anyhow::Error::msg)?;
    }
    let (pipeline, mock) = build_pipeline(&cfg)?;
    let items = load_items(&cfg, a.common.lenient)?;
    let seed = match &cfg.reservoir {
        Some(p) => Reservoir::load(p, pipeline.embedder()).context("memory-reservoir")?,
        None => pipeline.empty_reservoir(),
    };
    let rows = sweep_tau(&pipeline, &items, &seed, &a.grid, a.theta as usize)?;
    let out = &a.common.out;
    write_text(out, "sweep.csv", &sweep_csv(&rows))?;
    write_text(out, "sweep.txt", &sweep_table(&rows))?;
    print!("{}", sweep_table(&rows));
    report_misses(&mock, out)?;
    if rows.iter().any(|r| r.n_failed > 0) {
        return Ok(Outcome::Partial);
    }
    Ok(Outcome::Clean)
}

fn cmd_plateau(a: PlateauArgs) -> Result<Outcome> {
    let cfg = load_config(&a.common)?;
    let (pipeline, mock) = build_pipeline(&cfg)?;
    let items = load_items(&cfg, a.common.lenient)?;
    let rows = plateau_study(&pipeline, &items, a.max_snippets as usize, &a.orders)?;
    let out = &a.common.out;
    write_text(out, "plateau.csv", &plateau_csv(&rows))?;
    print!("{}", plateau_csv(&rows));
    report_misses(&mock, out)?;
    Ok(Outcome::Clean)
}

fn reservoir_embedder(config: &Option<PathBuf>) -> Result<Arc<dyn ragpipe_core::Embedder>> {
    let emb = match config {
        Some(p) => RunConfig::load(p)?.embedding,
        None => Default::default(),
    };
    emb.build().map_err(|e| anyhow::anyhow!("embedding-provider: {e}"))
}

fn cmd_reservoir(c: ReservoirCommand) -> Result<Outcome> {
    match c {
        ReservoirCommand::Inspect {
            path,
            query,
            tau,
            theta,
            config,
            limit,
        } => {
            let r = Reservoir::load(&path, reservoir_embedder(&config)?)?;
            println!("{}: {} entries", path.display(), r.len());
            match query {
                Some(q) => {
                    let trigger = TriggerConfig {
                        tau,
                        theta,
                        ..Default::default()
                    };
                    trigger.validate().map_err(anyhow::Error::msg)?;
                    let rep = r.popularity(&q, &trigger);
                    println!(
                        "pop = {}, within boundary = {} (tau {tau}, theta {theta})",
                        rep.pop, rep.within_boundary
                    );
                    for (title, sim) in rep.matched_titles.iter().take(limit) {
                        println!("{sim:.4}\t{title}");
                    }
                }
                None => {
                    let mut entries: Vec<_> = r.entries().iter().collect();
                    entries.sort_by_key(|e| std::cmp::Reverse(e.inserted_at));
                    for e in entries.into_iter().take(limit) {
                        println!("{}\t{}", e.inserted_at, e.title);
                    }
                }
            }
        }
        ReservoirCommand::Compact { path, out, config } => {
            let mut r = Reservoir::load(&path, reservoir_embedder(&config)?)?;
            r.compact();
            let target = out.unwrap_or(path);
            r.persist(&target)?;
            println!("{}: {} entries", target.display(), r.len());
        }
    }
    Ok(Outcome::Clean)
}

fn cmd_record(a: RecordArgs) -> Result<Outcome> {
    let mut cfg = load_config(&a.common)?;
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    let recorder = Arc::new(RecordingBackend::new(cfg.llm.build_backend().context("llm-gateway")?));
    let pipeline = Pipeline::with_chat_backend(cfg.clone(), recorder.clone())?;
    let items = load_items(&cfg, a.common.lenient)?;
    let questions = to_questions(&cfg, &items);
    let batch = pipeline.run_batch(&questions, &pipeline.options(cfg.mode), None)?;
    let out = &a.common.out;
    write_records(&out_path(out, "records.jsonl")?, &batch.records)?;
    recorder.save(&out_path(out, "script.jsonl")?)?;
    eprintln!("recorded {} exchange(s)", recorder.len());
    Ok(outcome(&batch.records))
}
