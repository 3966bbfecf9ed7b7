//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; exits non-zero if any fail.

use std::collections::HashMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ragpipe_core::eval::{answer_recall, exact_match, hit, normalize, snippet_precision, token_f1};
use ragpipe_core::filter::{build_nli_prompt, filter, FilterConfig};
use ragpipe_core::llm::{Gateway, GatewayLimits, ScriptedMock};
use ragpipe_core::reservoir::title_key;
use ragpipe_core::retriever::bm25::tokenize;
use ragpipe_core::retriever::distill::distill_text;
use ragpipe_core::retriever::{
    arrange, bm25_score, ArrangementOrder, Bm25Params, CorpusStats, KnowledgeInstance, NliLabel,
    SearchResultGroup, Source,
};
use ragpipe_core::{Embedder, HashingEmbedder, Reservoir, TriggerConfig};

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let checks: [(&str, Check); 10] = [
        ("popularity oracle", popularity_oracle),
        ("trigger monotonicity", trigger_monotonicity),
        ("reservoir semantics", reservoir_semantics),
        ("filter partition laws", filter_partition),
        ("arrangement laws", arrangement_laws),
        ("metric oracles", metric_oracles),
        ("bm25 oracle", bm25_oracle),
        ("golden end-to-end", golden_end_to_end),
        ("plateau structure", plateau_structure),
        ("ablation plumbing", ablation_plumbing),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| Err(panic_text(&e)));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({secs:.2}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.2}s): {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn panic_text(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure!(took < limit, "took {took:?}, limit {limit:?}");
    Ok(())
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn ragpipe(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ragpipe"))
        .env_remove("RUST_LOG")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "ragpipe {args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Header plus rows of a small CSV without quoted fields.
fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines().map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>());
    let header = lines.next().ok_or("empty csv")?;
    Ok((header, lines.collect()))
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("not a number: {s:?}"))
}

fn word(rng: &mut ChaCha8Rng, vocab: &[&str]) -> String {
    vocab.choose(rng).unwrap().to_string()
}

fn phrase(rng: &mut ChaCha8Rng, vocab: &[&str], max: usize) -> String {
    let n = rng.gen_range(1..=max);
    (0..n).map(|_| word(rng, vocab)).collect::<Vec<_>>().join(" ")
}

const VOCAB: &[&str] = &[
    "river", "castle", "film", "album", "city", "war", "king", "queen", "bridge", "opera",
    "novel", "river", "1943", "paris", "london", "monterrey", "girl", "founder", "election", "team",
];

fn popularity_oracle() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let embedder = HashingEmbedder::default();
    let mut reservoir = Reservoir::new(Arc::new(embedder));
    let mut titles = Vec::new();
    while titles.len() < 20 {
        let t = phrase(&mut rng, VOCAB, 4);
        if !titles.iter().any(|x: &String| title_key(x) == title_key(&t)) {
            reservoir.upsert(&t, "content").map_err(|e| e.to_string())?;
            titles.push(t);
        }
    }
    let mut queries: Vec<String> = (0..45).map(|_| phrase(&mut rng, VOCAB, 5)).collect();
    // Exact title matches exercise the τ = 1 boundary.
    queries.extend(titles.iter().take(5).cloned());

    let raw = |text: &str| embedder.embed(text).unwrap().values().to_vec();
    let title_vecs: Vec<Vec<f64>> = titles.iter().map(|t| raw(t)).collect();
    let brute = |q: &str, tau: f64| {
        let qv = raw(q);
        let mut count = 0;
        for tv in &title_vecs {
            let mut ab = 0.0;
            let mut aa = 0.0;
            let mut bb = 0.0;
            for k in 0..qv.len() {
                ab += qv[k] * tv[k];
                aa += qv[k] * qv[k];
                bb += tv[k] * tv[k];
            }
            let s = (ab / (aa * bb).sqrt()).clamp(-1.0, 1.0);
            if s >= tau {
                count += 1;
            }
        }
        count
    };

    let mut cases = 0;
    for step in 0..=5 {
        let tau = step as f64 * 0.2;
        let cfg = TriggerConfig { tau, theta: 3, ..Default::default() };
        for q in &queries {
            let got = reservoir.popularity(q, &cfg).pop;
            let want = brute(q, tau);
            ensure!(got == want, "tau {tau} query {q:?}: pop {got}, brute force {want}");
            cases += 1;
        }
    }
    within(start, Duration::from_secs(5))?;
    Ok(format!("{cases} (query, tau) cases exact"))
}

fn trigger_monotonicity() -> Result<String, String> {
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = fixtures().join("sweep/run.toml");
    ragpipe(&["sweep-tau", "--config", p(&cfg), "--out", p(out.path())])?;
    let (header, rows) = read_csv(&out.path().join("sweep.csv"))?;
    let col = |name: &str| header.iter().position(|h| h == name).ok_or(format!("no column {name}"));
    let (tau, ext, mem) = (col("tau")?, col("external_knowledge")?, col("memory_knowledge")?);
    ensure!(rows.len() == 5, "expected 5 grid rows, got {}", rows.len());
    for w in rows.windows(2) {
        ensure!(num(&w[1][mem]) <= num(&w[0][mem]), "memory rises at tau {}", w[1][tau]);
        ensure!(num(&w[1][ext]) >= num(&w[0][ext]), "external falls at tau {}", w[1][tau]);
    }
    let last = rows.last().unwrap();
    ensure!(num(&last[tau]) == 1.0, "last row tau {}", last[tau]);
    ensure!(num(&last[mem]) == 0.0, "tau=1 memory {}", last[mem]);
    ensure!(num(&last[ext]) == 15.0, "tau=1 external {} (want 3 queries x 5)", last[ext]);
    let series: Vec<String> = rows.iter().map(|r| format!("{}:{}/{}", r[tau], r[ext], r[mem])).collect();
    Ok(format!("tau:external/memory {}", series.join(" ")))
}

fn reservoir_semantics() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let embedder: Arc<dyn Embedder> = Arc::new(HashingEmbedder::default());
    let mut reservoir = Reservoir::new(embedder.clone());
    // key -> (first-seen title, latest content)
    let mut model: HashMap<String, (String, String)> = HashMap::new();
    for op in 0..10_000 {
        let base = format!("{} {}", word(&mut rng, VOCAB), rng.gen_range(0..200));
        let title: String = base
            .chars()
            .map(|c| if rng.gen_bool(0.3) { c.to_ascii_uppercase() } else { c })
            .collect();
        let content = format!("content {op}");
        reservoir.upsert(&title, &content).map_err(|e| e.to_string())?;
        model
            .entry(title_key(&title))
            .and_modify(|e| e.1 = content.clone())
            .or_insert((title.clone(), content));
    }
    ensure!(reservoir.len() == model.len(), "{} entries, model has {}", reservoir.len(), model.len());
    for e in reservoir.entries() {
        let (title, content) = model.get(&title_key(&e.title)).ok_or("entry not in model")?;
        ensure!(&e.title == title && &e.content == content, "entry {:?} diverges from model", e.title);
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("reservoir.jsonl");
    reservoir.persist(&path).map_err(|e| e.to_string())?;
    let loaded = Reservoir::load(&path, embedder).map_err(|e| e.to_string())?;
    let key = |r: &Reservoir| {
        let mut v = r.entries().to_vec();
        v.sort_by_key(|e| e.inserted_at);
        v
    };
    ensure!(key(&loaded) == key(&reservoir), "persist/load round trip differs");
    within(start, Duration::from_secs(10))?;
    Ok(format!("10000 upserts -> {} titles, round trip equal", model.len()))
}

fn instance(i: usize, tag: &str) -> KnowledgeInstance {
    KnowledgeInstance::new(format!("{tag} title {i}"), format!("{tag} content {i}"), Source::Memory).unwrap()
}

fn filter_partition() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = FilterConfig::default();
    let labels = [NliLabel::Entailment, NliLabel::Contradiction, NliLabel::Neutral];
    let mut batches = 0;
    for trial in 0..60 {
        let n = if trial == 0 { 100 } else { rng.gen_range(0..=100) };
        let question = format!("question {trial}?");
        let ks: Vec<KnowledgeInstance> = (0..n).map(|i| instance(i, &format!("t{trial}"))).collect();
        // Some batches are all non-entailment so back-off is exercised.
        let pool = if trial % 7 == 0 { &labels[1..] } else { &labels[..] };
        let script: Vec<NliLabel> = ks.iter().map(|_| *pool.choose(&mut rng).unwrap()).collect();
        let pairs: Vec<(String, String)> = ks
            .iter()
            .zip(&script)
            .map(|(k, l)| (build_nli_prompt(&question, k, &cfg), format!("reason**{}", l.as_str())))
            .collect();
        let gateway = Gateway::new(Arc::new(ScriptedMock::from_pairs(pairs)), GatewayLimits::default());
        let out = filter(&gateway, &question, &ks, &cfg);

        ensure!(out.retained.len() + out.discarded.len() == n, "sizes do not add up");
        let keep: Vec<&str> = ks.iter().zip(&script).filter(|(_, l)| **l == NliLabel::Entailment).map(|(k, _)| k.id.as_str()).collect();
        let drop: Vec<&str> = ks.iter().zip(&script).filter(|(_, l)| **l != NliLabel::Entailment).map(|(k, _)| k.id.as_str()).collect();
        let ids = |v: &[KnowledgeInstance]| v.iter().map(|k| k.id.clone()).collect::<Vec<_>>();
        ensure!(ids(&out.retained) == keep, "retained order or content wrong");
        ensure!(ids(&out.discarded) == drop, "discarded order or content wrong");
        ensure!(out.back_off == out.retained.is_empty(), "back_off mismatch");
        ensure!(out.irrelevant_count() == drop.len(), "irrelevant count {} vs {}", out.irrelevant_count(), drop.len());
        batches += 1;
    }
    Ok(format!("{batches} scripted batches up to 100 instances"))
}

fn groups(sizes: &[usize]) -> Vec<SearchResultGroup> {
    sizes
        .iter()
        .enumerate()
        .map(|(qi, &n)| SearchResultGroup {
            query: format!("q{qi}"),
            query_index: qi,
            instances: (0..n)
                .map(|r| {
                    KnowledgeInstance::new(
                        format!("g{qi}r{r}"),
                        format!("snippet {qi} {r}"),
                        Source::External { query_index: qi, rank: r + 1, url: format!("http://{qi}/{r}") },
                    )
                    .unwrap()
                })
                .collect(),
        })
        .collect()
}

fn group_of(k: &KnowledgeInstance) -> usize {
    match k.source {
        Source::External { query_index, .. } => query_index,
        Source::Memory => usize::MAX,
    }
}

fn arrangement_laws() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let g = rng.gen_range(1..=5);
        let sizes: Vec<usize> = (0..g).map(|_| rng.gen_range(0..=12)).collect();
        let gs = groups(&sizes);
        let total: usize = sizes.iter().sum();
        let cap = total + rng.gen_range(0..5);
        let mut a: Vec<String> = arrange(&gs, ArrangementOrder::Mixed, cap).into_iter().map(|k| k.id).collect();
        let mut b: Vec<String> = arrange(&gs, ArrangementOrder::Sequential, cap).into_iter().map(|k| k.id).collect();
        ensure!(a.len() == total, "mixed dropped instances for {sizes:?}");
        a.sort();
        b.sort();
        ensure!(a == b, "multisets differ for {sizes:?}");

        let size = rng.gen_range(1..=10);
        let equal = groups(&vec![size; g]);
        let mixed = arrange(&equal, ArrangementOrder::Mixed, g * size);
        let mut counts = vec![0usize; g];
        for k in &mixed {
            counts[group_of(k)] += 1;
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            ensure!(hi - lo <= 1, "unfair prefix {counts:?} for {g}x{size}");
        }
    }
    let capped = arrange(&groups(&[10, 10, 10]), ArrangementOrder::Mixed, 9);
    let mut per = [0usize; 3];
    capped.iter().for_each(|k| per[group_of(k)] += 1);
    ensure!(capped.len() == 9 && per == [3, 3, 3], "3x10 cap 9 gave {per:?}");
    Ok("500 random layouts; 3x10 cap 9 -> [3, 3, 3]".into())
}

fn metric_oracles() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let words = ["Paris", "the", "1943", "girl,", "Monterrey", "a", "river", "X", "y!"];
    for _ in 0..1000 {
        let ks: Vec<KnowledgeInstance> = (0..rng.gen_range(0..6))
            .map(|i| {
                KnowledgeInstance::new(
                    format!("{} {i}", phrase(&mut rng, &words, 2)),
                    phrase(&mut rng, &words, 6),
                    Source::Memory,
                )
                .unwrap()
            })
            .collect();
        let answers: Vec<String> = (0..rng.gen_range(1..4)).map(|_| phrase(&mut rng, &words, 2)).collect();

        let texts: Vec<String> = ks.iter().map(|k| normalize(&format!("{} {}", k.title, k.content))).collect();
        let mut found = 0usize;
        for a in &answers {
            let a = normalize(a);
            let mut any = false;
            for t in &texts {
                if !a.is_empty() && t.contains(&a) {
                    any = true;
                }
            }
            found += any as usize;
        }
        let want_recall = found as f64 / answers.len() as f64;
        let mut containing = 0usize;
        for t in &texts {
            let mut any = false;
            for a in &answers {
                let a = normalize(a);
                if !a.is_empty() && t.contains(&a) {
                    any = true;
                }
            }
            containing += any as usize;
        }
        let want_precision = if ks.is_empty() { 0.0 } else { containing as f64 / ks.len() as f64 };
        ensure!(answer_recall(&ks, &answers) == want_recall, "recall mismatch for {answers:?}");
        ensure!(snippet_precision(&ks, &answers) == want_precision, "precision mismatch for {answers:?}");

        let response = if rng.gen_bool(0.3) { answers[0].to_uppercase() } else { phrase(&mut rng, &words, 4) };
        ensure!(!exact_match(&response, &answers) || hit(&response, &answers), "EM without hit: {response:?}");
    }
    // precision 2/4, recall 2/3
    let f1 = token_f1("w x c d", &["c d e"]);
    ensure!((f1 - 4.0 / 7.0).abs() < 1e-9, "token_f1 = {f1}, want 4/7");
    Ok(format!("1000 fixtures exact; token_f1 = {f1:.6}"))
}

fn bm25_oracle() -> Result<String, String> {
    let passages = ["the cat sat on the mat", "the dog sat", "cat and dog and cat"];
    let toks: Vec<Vec<String>> = passages.iter().map(|p| tokenize(p)).collect();
    let stats = CorpusStats::from_passages(&toks);
    let params = Bm25Params::default();
    let query = tokenize("cat dog mat");
    let (k1, b) = (params.k1, params.b);
    let n = passages.len() as f64;
    let avg = toks.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut scores = Vec::new();
    for p in &toks {
        let mut want = 0.0;
        for q in &query {
            let df = toks.iter().filter(|d| d.contains(q)).count() as f64;
            let tf = p.iter().filter(|t| *t == q).count() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            want += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * p.len() as f64 / avg));
        }
        let got = bm25_score(&query, p, &stats, &params);
        ensure!((got - want).abs() < 1e-9, "{got} vs {want}");
        scores.push(got);
    }

    let sentences: Vec<String> = (1..=10)
        .map(|i| match i {
            3 => "The observatory opened to visitors in 1931.".to_string(),
            7 => "Its telescope dome was rebuilt after the observatory fire.".to_string(),
            n => format!("Filler sentence number {n} talks about gardens and weather."),
        })
        .collect();
    let one_by_one = Bm25Params { passage_window_sentences: 1, passages_kept: 2, ..params };
    let got = distill_text(&sentences.join(" "), "observatory", &one_by_one).map_err(|e| e.to_string())?;
    let want = format!("{} {}", sentences[2], sentences[6]);
    ensure!(got == want, "distilled {got:?}");
    Ok(format!("scores {scores:.6?}; distilled sentences 3 and 7"))
}

fn golden_end_to_end() -> Result<String, String> {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = fixtures().join("golden/run.toml");
    let variants: [(&str, &[&str]); 4] = [
        ("a", &[]),
        ("b", &[]),
        ("w1", &["--workers", "1"]),
        ("w4", &["--workers", "4"]),
    ];
    let mut outputs = Vec::new();
    for (name, extra) in variants {
        let out = dir.path().join(name);
        let mut args = vec!["run", "--config", p(&cfg), "--mode", "rplus_rfr", "--out", p(&out)];
        args.extend_from_slice(extra);
        ragpipe(&args)?;
        let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| format!("{name}/{f}: {e}"));
        outputs.push((name, read("records.jsonl")?, read("report.csv")?));
    }
    let (_, records, report) = &outputs[0];
    for (name, r, c) in &outputs[1..] {
        ensure!(r == records, "records.jsonl of {name} differs");
        ensure!(c == report, "report.csv of {name} differs");
    }
    within(start, Duration::from_secs(30))?;
    let lines = String::from_utf8_lossy(records).lines().count();
    Ok(format!("4 runs byte-identical ({lines} records)"))
}

fn plateau_structure() -> Result<String, String> {
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = fixtures().join("plateau/run.toml");
    ragpipe(&["plateau-study", "--config", p(&cfg), "--out", p(out.path())])?;
    let (header, rows) = read_csv(&out.path().join("plateau.csv"))?;
    ensure!(
        header == ["snippet_count", "order", "answer_recall", "snippet_precision"],
        "header {header:?}"
    );
    let curve = |order: &str| -> Vec<(f64, f64)> {
        rows.iter().filter(|r| r[1] == order).map(|r| (num(&r[2]), num(&r[3]))).collect()
    };
    let (seq, mixed) = (curve("sequential"), curve("mixed"));
    ensure!(seq.len() == 30 && mixed.len() == 30, "expected 30 counts per order");
    // Saturation: from here on the two orders agree.
    let sat = (0..30).rev().take_while(|&i| seq[i] == mixed[i]).last().ok_or("orders differ at 30")?;
    ensure!(sat > 0, "curves never differ, nothing to compare");
    for i in 0..sat {
        ensure!(mixed[i].0 >= seq[i].0, "count {}: mixed {} < sequential {}", i + 1, mixed[i].0, seq[i].0);
    }
    ensure!((0..sat).any(|i| mixed[i].0 > seq[i].0), "mixed never leads");
    Ok(format!(
        "mixed >= sequential below saturation at count {}; at 5: {} vs {}",
        sat + 1,
        mixed[4].0,
        seq[4].0
    ))
}

fn ablation_plumbing() -> Result<String, String> {
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = fixtures().join("golden/run.toml");
    ragpipe(&["run", "--config", p(&cfg), "--ablation", "--out", p(out.path())])?;
    let (header, rows) = read_csv(&out.path().join("ablation.csv"))?;
    ensure!(header == ["dataset", "question", "knowledge", "F1", "hit_rate"], "header {header:?}");
    ensure!(rows.len() == 6, "{} rows", rows.len());
    let mut combos: Vec<(String, String)> = rows.iter().map(|r| (r[1].clone(), r[2].clone())).collect();
    combos.sort();
    combos.dedup();
    ensure!(combos.len() == 6, "duplicate settings {combos:?}");
    std::fs::metadata(out.path().join("ablation.txt")).map_err(|e| format!("ablation.txt: {e}"))?;
    Ok(format!("6 settings: {combos:?}"))
}
