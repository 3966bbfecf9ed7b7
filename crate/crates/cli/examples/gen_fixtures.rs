//! Regenerates the shipped fixtures under `fixtures/`.
//!
//! A rule-based stand-in LLM that knows the answer to every fixture question
//! is wrapped in the recording backend, and the real pipeline is run over each
//! fixture. The recorded exchanges become the mock scripts, so every fixture
//! replays offline through exactly the prompts the pipeline builds.
//!
//!     cargo run -p ragpipe-cli --example gen_fixtures -- fixtures

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{ensure, Context, Result};
use serde_json::json;

use ragpipe_core::eval::{write_dataset, QaItem};
use ragpipe_core::llm::{ChatBackend, ChatRequest, ChatResponse, RecordingBackend};
use ragpipe_core::pipeline::{
    ablation, ablation_table, plateau_study, sweep_table, sweep_tau, Pipeline, PipelineMode,
    RunConfig,
};
use ragpipe_core::reservoir::Reservoir;
use ragpipe_core::retriever::ArrangementOrder;
use ragpipe_core::retry::BackendError;

/// What the stand-in LLM knows about one question.
#[derive(Clone)]
struct Fact {
    original: String,
    rewritten: String,
    queries: Vec<String>,
    /// Knowledge containing any of these is judged entailment.
    evidence: Vec<String>,
    answer: String,
    closed_book: String,
    closed_book_rewritten: String,
}

#[derive(Default)]
struct OracleLlm {
    facts: HashMap<String, Arc<Fact>>,
}

impl OracleLlm {
    fn add(&mut self, f: Fact) {
        let f = Arc::new(f);
        self.facts.insert(f.original.clone(), f.clone());
        self.facts.insert(f.rewritten.clone(), f);
    }

    fn fact(&self, q: &str) -> Option<&Fact> {
        self.facts.get(q.trim()).map(|f| &**f)
    }

    fn reply(&self, p: &str) -> String {
        if p.contains("[Original Question]:") {
            let q = between(p, "[Original Question]:\n", "\n\n");
            return match self.fact(q) {
                Some(f) => format!("{}**{}", f.rewritten, f.queries.join("**")),
                None => format!("{q}**{q}"),
            };
        }
        let q = between(p, "[Question]:\n", "\n\n");
        let Some(f) = self.fact(q) else {
            return "I do not know this question.".into();
        };
        if p.contains("[Examples]:") {
            // Reader: trusts the lead knowledge block.
            let knowledge = between(p, "[Knowledge]:\n", "\n\n[Examples]:");
            if !p.contains("[Knowledge]:") {
                return if q.trim() == f.rewritten {
                    f.closed_book_rewritten.clone()
                } else {
                    f.closed_book.clone()
                };
            }
            let title = between(knowledge, "Title: ", "\n");
            let content = between(knowledge, "Content: ", "\n");
            return if f.evidence.iter().any(|e| content.contains(e.as_str())) {
                f.answer.clone()
            } else {
                title.to_string()
            };
        }
        let knowledge = between(p, "[Knowledge]:\n", "\n\n[Format]:");
        match f.evidence.iter().find(|e| knowledge.contains(e.as_str())) {
            Some(e) => format!("The knowledge states {e}, which answers the question.**entailment"),
            None => "The knowledge does not address what the question asks.**neutral".into(),
        }
    }
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> &'a str {
    let Some(i) = text.find(start) else { return "" };
    let rest = &text[i + start.len()..];
    rest[..rest.find(end).unwrap_or(rest.len())].trim()
}

impl ChatBackend for OracleLlm {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let text = self.reply(&req.user_text);
        Ok(ChatResponse {
            input_token_estimate: 0,
            output_token_estimate: 0,
            latency_ms: 0,
            text,
        })
    }
}

struct Hit {
    title: String,
    snippet: String,
    url: String,
    page: Option<String>,
}

fn hit(title: &str, snippet: &str, url: &str) -> Hit {
    Hit {
        title: title.into(),
        snippet: snippet.into(),
        url: url.into(),
        page: None,
    }
}

fn page(title: &str, sentences: &[String]) -> String {
    format!(
        "<html><head><title>{title}</title></head><body><p>{}</p></body></html>",
        sentences.join(" ")
    )
}

#[derive(Default)]
struct Corpus {
    queries: Vec<(String, Vec<Hit>)>,
}

impl Corpus {
    fn add(&mut self, query: &str, hits: Vec<Hit>) {
        if self.queries.iter().all(|(q, _)| q != query) {
            self.queries.push((query.to_string(), hits));
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let mut corpus = String::new();
        let mut pages = String::new();
        for (q, hits) in &self.queries {
            let results: Vec<_> = hits
                .iter()
                .map(|h| json!({"title": h.title, "snippet": h.snippet, "url": h.url}))
                .collect();
            corpus += &json!({"query": q, "results": results}).to_string();
            corpus.push('\n');
            for h in hits {
                if let Some(html) = &h.page {
                    pages += &json!({"url": h.url, "html": html}).to_string();
                    pages.push('\n');
                }
            }
        }
        std::fs::write(dir.join("corpus.jsonl"), corpus)?;
        std::fs::write(dir.join("pages.jsonl"), pages)?;
        Ok(())
    }
}

/// `top` holds extra top-level keys, which must precede the tables.
fn config_header(mode: &str, dataset: &str, tag: &str, timing: bool, top: &str) -> String {
    format!(
        "mode = \"{mode}\"\ndataset = \"{dataset}\"\ndataset_tag = \"{tag}\"\nworkers = 4\nrecord_timing = {timing}\n{top}\n\
         [llm]\nbackend_kind = \"scripted_mock\"\nscript_path = \"script.jsonl\"\n\n\
         [search]\nbackend = \"fixture\"\ncorpus = \"corpus.jsonl\"\npages = \"pages.jsonl\"\n"
    )
}

fn pipeline(config: &Path, llm: Arc<dyn ChatBackend>) -> Result<Pipeline> {
    let cfg = RunConfig::load(config).with_context(|| config.display().to_string())?;
    Ok(Pipeline::with_chat_backend(cfg, llm)?)
}

fn item(id: impl Into<String>, question: &str, answers: Vec<String>) -> Result<QaItem> {
    QaItem::new(id, question, answers).map_err(anyhow::Error::msg)
}

fn questions(p: &Pipeline, items: &[QaItem]) -> Vec<ragpipe_core::OriginalQuestion> {
    items
        .iter()
        .map(|i| i.to_question(Some(&p.config().dataset_tag)))
        .collect()
}

fn golden(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let s = |x: &str| x.to_string();
    let facts = vec![
        Fact {
            original: s("Which film was released earlier, The Girl From Monterrey or Jhuthi Sharm?"),
            rewritten: s("Between the films The Girl from Monterrey and Jhuthi Sharm, which one had the earlier release date?"),
            queries: vec![
                s("The Girl from Monterrey release date"),
                s("Jhuthi Sharm release date"),
                s("Jhuthi Sharm vs The Girl from Monterrey"),
            ],
            evidence: vec![s("1940"), s("1943")],
            answer: s("Jhuthi Sharm"),
            closed_book: s("The Girl From Monterrey"),
            closed_book_rewritten: s("The Girl from Monterrey"),
        },
        Fact {
            original: s("whats the capital of australia, its sydney right"),
            rewritten: s("What is the capital city of Australia?"),
            queries: vec![s("Australia largest city"), s("capital city of Australia"), s("Canberra Sydney capital")],
            evidence: vec![s("capital city of Australia")],
            answer: s("Canberra"),
            closed_book: s("Sydney"),
            closed_book_rewritten: s("Canberra"),
        },
        Fact {
            original: s("who wrote 1984"),
            rewritten: s("Who is the author of the novel Nineteen Eighty-Four?"),
            queries: vec![s("Nineteen Eighty-Four author"), s("1984 novel writer"), s("Orwell dystopian novel")],
            evidence: vec![s("George Orwell")],
            answer: s("George Orwell"),
            closed_book: s("George Orwell"),
            closed_book_rewritten: s("George Orwell"),
        },
    ];
    let items = vec![
        item("fig4", &facts[0].original, vec![s("Jhuthi Sharm")])?,
        item("capital", &facts[1].original, vec![s("Canberra")])?,
        item("orwell", &facts[2].original, vec![s("George Orwell"), s("Orwell")])?,
    ];

    let with_page = |mut h: Hit, extra: &str| {
        h.page = Some(page(&h.title, &[h.snippet.clone(), extra.to_string()]));
        h
    };
    let mut c = Corpus::default();
    c.add(&facts[0].queries[0], vec![with_page(
        hit("The Girl from Monterrey", "The Girl from Monterrey is a 1943 American musical film.", "https://films.example/girl-from-monterrey"),
        "It was produced by a small Hollywood studio.",
    )]);
    c.add(&facts[0].queries[1], vec![with_page(
        hit("Jhuthi Sharm", "Jhuthi Sharm is a 1940 Hindi-language social drama film.", "https://films.example/jhuthi-sharm"),
        "The film was made in Bombay.",
    )]);
    c.add(&facts[0].queries[2], vec![with_page(
        hit("Monterrey", "Monterrey is the capital of the northeastern Mexican state of Nuevo Leon.", "https://places.example/monterrey"),
        "It is an industrial centre.",
    )]);
    c.add(&facts[0].original, vec![with_page(
        hit("Monterrey", "Monterrey is the capital of the northeastern Mexican state of Nuevo Leon.", "https://places.example/monterrey"),
        "It is an industrial centre.",
    )]);
    c.add(&facts[1].queries[0], vec![with_page(
        hit("Sydney", "Sydney is the most populous city in Australia.", "https://places.example/sydney"),
        "Its harbour is famous.",
    )]);
    c.add(&facts[1].queries[1], vec![with_page(
        hit("Canberra", "Canberra is the capital city of Australia.", "https://places.example/canberra"),
        "It was purpose-built as the seat of government.",
    )]);
    c.add(&facts[1].queries[2], vec![]);
    c.add(&facts[1].original, vec![with_page(
        hit("Sydney Opera House", "The Sydney Opera House is a performing arts centre in Sydney.", "https://places.example/sydney-opera-house"),
        "It opened in 1973.",
    )]);
    c.add(&facts[2].queries[0], vec![with_page(
        hit("Nineteen Eighty-Four", "Nineteen Eighty-Four is a dystopian novel by English writer George Orwell, published in 1949.", "https://books.example/nineteen-eighty-four"),
        "It introduced the phrase Big Brother.",
    )]);
    c.add(&facts[2].queries[1], vec![]);
    c.add(&facts[2].queries[2], vec![]);
    c.add(&facts[2].original, vec![with_page(
        hit("1984 (film)", "1984 is a British film adaptation of the novel.", "https://films.example/1984-film"),
        "It was shot in London.",
    )]);
    c.write(dir)?;
    write_dataset(&dir.join("dataset.jsonl"), &items)?;

    let mut cfg = config_header("rplus_rfr", "dataset.jsonl", "golden", false, "");
    for mode in ["direct", "rplus_rr", "rplus_rfr"] {
        for form in ["original", "rewritten"] {
            cfg += &format!("\n[[ablation]]\nmode = \"{mode}\"\nquestion = \"{form}\"\n");
        }
    }
    std::fs::write(dir.join("run.toml"), cfg)?;

    let mut oracle = OracleLlm::default();
    facts.into_iter().for_each(|f| oracle.add(f));
    let oracle: Arc<dyn ChatBackend> = Arc::new(oracle);

    // The headline configuration on its own, to pin its prompt count.
    let only = Arc::new(RecordingBackend::new(oracle.clone()));
    let p = pipeline(&dir.join("run.toml"), only.clone())?;
    let qs = questions(&p, &items);
    p.run_batch(&qs, &p.options(PipelineMode::RplusRfr), None)?;
    ensure!(only.len() == 12, "rplus_rfr used {} prompts", only.len());

    let rec = Arc::new(RecordingBackend::new(oracle));
    let p = pipeline(&dir.join("run.toml"), rec.clone())?;
    for mode in PipelineMode::ALL {
        let b = p.run_batch(&qs, &p.options(mode), None)?;
        ensure!(b.records.iter().all(|r| !r.failed()), "{mode} failed");
    }
    let (rows, _) = ablation(&p, &items, &p.config().ablation)?;
    print!("{}", ablation_table(&rows));
    rec.save(&dir.join("script.jsonl"))?;
    Ok(())
}

const SYL_A: [&str; 10] = ["Bel", "Cor", "Dun", "Fal", "Gar", "Hol", "Kir", "Lan", "Mor", "Nor"];
const SYL_B: [&str; 10] = ["ford", "ham", "wick", "mere", "stead", "by", "ton", "well", "dale", "worth"];
const SYL_C: [&str; 10] = ["Ar", "Ev", "Is", "Ol", "Ur", "Yn", "Ez", "Om", "Ul", "Ax"];
const SYL_D: [&str; 10] = ["ven", "rith", "lan", "dor", "mire", "sk", "tal", "bro", "nay", "quel"];
const SOURCES: [&str; 5] = ["Atlas", "Gazetteer", "Almanac", "Register", "Chronicle"];
const COUNTIES: [&str; 5] = ["the Northmarch", "the Eastvale", "the Southfen", "the Westmoor", "the Midshire"];

struct Town {
    name: String,
    year: String,
    river: String,
    county: &'static str,
}

fn town(i: usize) -> Town {
    Town {
        name: format!("{}{}", SYL_A[i / 10], SYL_B[i % 10]),
        year: (1102 + 7 * i).to_string(),
        river: format!("River {}{}", SYL_C[i % 10], SYL_D[i / 10]),
        county: COUNTIES[i % 5],
    }
}

/// Five pages per query; titles extend the query with the source name.
fn town_hits(t: &Town, query: &str, slug: &str) -> Vec<Hit> {
    SOURCES
        .iter()
        .enumerate()
        .map(|(r, src)| {
            let title = format!("{query} - {src}");
            let mut sentences = vec![
                format!("{} is a market town in {}.", t.name, t.county),
                format!("The founding year of {} is {}, when the town received its charter.", t.name, t.year),
                format!("The {} flows through {} and shapes the geography of the valley.", t.river, t.name),
                format!("Town history records a spring fair held in {} for centuries.", t.name),
                format!("The {src} has described {} since its first edition.", t.name),
                "Local weather is mild with frequent rain.".to_string(),
            ];
            sentences.rotate_left(r);
            Hit {
                snippet: format!("{} - an entry in the {src}.", t.name),
                url: format!("https://{}.example/{slug}/{}", src.to_lowercase(), query.replace(' ', "-").to_lowercase()),
                page: Some(page(&title, &sentences)),
                title,
            }
        })
        .collect()
}

fn sweep(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut oracle = OracleLlm::default();
    let mut corpus = Corpus::default();
    let mut warm = Vec::new();
    let mut replay = Vec::new();
    for i in 0..100 {
        let t = town(i);
        let n = &t.name;
        let f = Fact {
            original: format!("when was {n} founded"),
            rewritten: format!("In which year was the town of {n} founded?"),
            queries: vec![format!("{n} founding year"), format!("{n} town history"), format!("{n} founded charter")],
            evidence: vec![t.year.clone()],
            answer: t.year.clone(),
            closed_book: "I am not sure.".into(),
            closed_book_rewritten: "I am not sure.".into(),
        };
        for q in &f.queries {
            corpus.add(q, town_hits(&t, q, &n.to_lowercase()));
        }
        warm.push(item(format!("w{i:03}"), &f.original, vec![t.year.clone()])?);
        oracle.add(f);
    }
    for j in 0..200 {
        let t = town(j % 100);
        let n = &t.name;
        let f = if j < 100 {
            Fact {
                original: format!("what year was {n} established"),
                rewritten: format!("In which year was the town of {n} established?"),
                queries: vec![format!("{n} founding year"), format!("{n} establishment"), format!("{n} history year")],
                evidence: vec![t.year.clone()],
                answer: t.year.clone(),
                closed_book: "I am not sure.".into(),
                closed_book_rewritten: "I am not sure.".into(),
            }
        } else {
            Fact {
                original: format!("which river runs through {n}"),
                rewritten: format!("Which river flows through the town of {n}?"),
                queries: vec![format!("{n} town history"), format!("{n} river"), format!("{n} geography river")],
                evidence: vec![t.river.clone()],
                answer: t.river.clone(),
                closed_book: "I am not sure.".into(),
                closed_book_rewritten: "I am not sure.".into(),
            }
        };
        for q in &f.queries {
            corpus.add(q, town_hits(&t, q, &n.to_lowercase()));
        }
        replay.push(item(format!("r{j:03}"), &f.original, vec![f.answer.clone()])?);
        oracle.add(f);
    }
    corpus.write(dir)?;
    write_dataset(&dir.join("warmup.jsonl"), &warm)?;
    write_dataset(&dir.join("replay.jsonl"), &replay)?;
    let tables = "\n[retrieval]\npage_top_n = 5\n\n[trigger]\ntheta = 3\n";
    std::fs::write(
        dir.join("warmup.toml"),
        config_header("memory_augmented", "warmup.jsonl", "warmup", true, "reservoir = \"reservoir.jsonl\"\n")
            + &tables.replace("[trigger]\n", "[trigger]\ntau = 1.0\n"),
    )?;
    std::fs::write(
        dir.join("run.toml"),
        config_header(
            "memory_augmented",
            "replay.jsonl",
            "replay",
            true,
            "reservoir = \"reservoir.jsonl\"\nupdate_reservoir = false\n",
        ) + &tables.replace("[trigger]\n", "[trigger]\ntau = 0.6\n"),
    )?;

    let rec = Arc::new(RecordingBackend::new(Arc::new(oracle)));
    let res_path = dir.join("reservoir.jsonl");
    let _ = std::fs::remove_file(&res_path);
    let p = pipeline(&dir.join("warmup.toml"), rec.clone())?;
    let mut seed = p.empty_reservoir();
    let b = p.run_batch(&questions(&p, &warm), &p.options(PipelineMode::MemoryAugmented), Some(&mut seed))?;
    ensure!(b.aggregate.memory_knowledge == 0.0, "warm-up recalled memory");
    seed.persist(&res_path)?;

    let p = pipeline(&dir.join("run.toml"), rec.clone())?;
    let seed = Reservoir::load(&res_path, p.embedder())?;
    let rows = sweep_tau(&p, &replay, &seed, &[0.2, 0.4, 0.6, 0.8, 1.0], 3)?;
    print!("{}", sweep_table(&rows));
    let last = rows.last().unwrap();
    ensure!(last.memory_knowledge == 0.0 && last.external_knowledge == 15.0);
    rec.save(&dir.join("script.jsonl"))?;
    Ok(())
}

const FIRST: [&str; 10] = ["Ada", "Bram", "Cleo", "Dov", "Esme", "Finn", "Greta", "Hugo", "Ines", "Jonas"];
const LAST: [&str; 10] = ["Achterberg", "Brightwater", "Castellane", "Drummond", "Eskildsen", "Fairbairn", "Gallardo", "Hollis", "Ivanova", "Jansky"];

fn plateau(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut oracle = OracleLlm::default();
    let mut corpus = Corpus::default();
    let mut items = Vec::new();
    for i in 0..20 {
        let company = format!("{}{} Works", SYL_C[i % 10], SYL_B[(i * 3) % 10]);
        let a = format!("{} {}", FIRST[i % 10], LAST[(i * 7) % 10]);
        let b = format!("{} {}", FIRST[(i + 5) % 10], LAST[(i * 3 + 1) % 10]);
        let f = Fact {
            original: format!("who started {company}"),
            rewritten: format!("Who were the founders of the company {company}?"),
            queries: vec![format!("{company} founder"), format!("{company} co-founders"), format!("{company} company history")],
            evidence: vec![a.clone(), b.clone()],
            answer: format!("{a} and {b}"),
            closed_book: "I am not sure.".into(),
            closed_book_rewritten: "I am not sure.".into(),
        };
        // Query 1 keeps repeating one founder; queries 2 and 3 lead with both.
        let layouts: [Vec<(usize, &String)>; 3] = [
            vec![(3 + i % 3, &a), (7, &a)],
            vec![(1 + i % 2, &b)],
            vec![(1, &a), (3, &b)],
        ];
        for (qi, (q, layout)) in f.queries.iter().zip(&layouts).enumerate() {
            let hits = (1..=10)
                .map(|r| {
                    let snippet = match layout.iter().find(|(rank, _)| *rank == r) {
                        Some((_, who)) => format!("{company} was founded by {who}."),
                        None => format!("{company} product catalogue, section {qi}.{r}."),
                    };
                    hit(
                        &format!("{q} result {r}"),
                        &snippet,
                        &format!("https://biz.example/{i}/{qi}/{r}"),
                    )
                })
                .collect();
            corpus.add(q, hits);
        }
        items.push(item(format!("p{i:02}"), &f.original, vec![a, b])?);
        oracle.add(f);
    }
    corpus.write(dir)?;
    write_dataset(&dir.join("dataset.jsonl"), &items)?;
    std::fs::write(
        dir.join("run.toml"),
        config_header("rplus_rr", "dataset.jsonl", "plateau", false, "") + "\n[retrieval]\nsnippet_top_n = 10\n",
    )?;
    let rec = Arc::new(RecordingBackend::new(Arc::new(oracle)));
    let p = pipeline(&dir.join("run.toml"), rec.clone())?;
    let rows = plateau_study(&p, &items, 30, &[ArrangementOrder::Sequential, ArrangementOrder::Mixed])?;
    let (seq, mix) = rows.split_at(30);
    for (s, m) in seq.iter().zip(mix) {
        ensure!(m.answer_recall >= s.answer_recall, "mixed behind at {}", s.snippet_count);
    }
    ensure!(seq[29].answer_recall == mix[29].answer_recall);
    rec.save(&dir.join("script.jsonl"))?;
    Ok(())
}

fn main() -> Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    golden(&root.join("golden"))?;
    sweep(&root.join("sweep"))?;
    plateau(&root.join("plateau"))?;
    Ok(())
}
