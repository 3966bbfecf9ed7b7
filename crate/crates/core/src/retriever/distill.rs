//! Full-page mode: fetch a result URL, strip markup, and keep the sentence
//! windows that score highest against the query under BM25.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::bm25::{bm25_score, tokenize, Bm25Params, CorpusStats};
use crate::jsonl::{read_records, JsonlError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DistillError {
    #[error("fetch {url}: {message}")]
    Fetch { url: String, message: String },
    #[error("page {0} has no extractable text")]
    EmptyPage(String),
    #[error("distillation query is empty")]
    EmptyQuery,
}

pub trait PageSource: Send + Sync {
    /// Raw HTML of `url`.
    fn fetch(&self, url: &str) -> Result<String, DistillError>;
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestRecord {
    url: String,
    #[serde(default)]
    path: Option<PathBuf>,
    #[serde(default)]
    html: Option<String>,
}

/// Local HTML pages keyed by URL. The manifest is line-delimited
/// `{"url": ..., "path": ...}` with paths relative to the manifest; a record may
/// carry the page inline as `"html"` instead.
#[derive(Debug, Clone, Default)]
pub struct PageFixtures {
    pages: HashMap<String, String>,
}

impl PageFixtures {
    pub fn load(manifest: &Path) -> Result<Self, JsonlError> {
        let base = manifest.parent().unwrap_or(Path::new("."));
        let mut pages = HashMap::new();
        for (line, rec) in read_records::<ManifestRecord>(manifest)? {
            let html = match (rec.html, rec.path) {
                (Some(html), None) => html,
                (None, Some(p)) => {
                    let path = base.join(p);
                    std::fs::read_to_string(&path).map_err(|e| {
                        JsonlError::format(manifest, line, format!("{}: {e}", path.display()))
                    })?
                }
                _ => {
                    return Err(JsonlError::format(
                        manifest,
                        line,
                        "exactly one of \"path\" and \"html\" is required".to_string(),
                    ))
                }
            };
            pages.insert(rec.url, html);
        }
        Ok(Self { pages })
    }

    pub fn insert(&mut self, url: impl Into<String>, html: impl Into<String>) {
        self.pages.insert(url.into(), html.into());
    }
}

impl PageSource for PageFixtures {
    fn fetch(&self, url: &str) -> Result<String, DistillError> {
        self.pages.get(url).cloned().ok_or_else(|| DistillError::Fetch {
            url: url.to_string(),
            message: "not in page fixtures".into(),
        })
    }
}

/// Plain HTTP GET of the page.
pub struct HttpPageSource {
    agent: ureq::Agent,
}

impl HttpPageSource {
    pub fn new(timeout_ms: u64) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_millis(timeout_ms.max(1))))
            .build();
        Self {
            agent: config.into(),
        }
    }
}

impl PageSource for HttpPageSource {
    fn fetch(&self, url: &str) -> Result<String, DistillError> {
        let fail = |e: ureq::Error| DistillError::Fetch {
            url: url.to_string(),
            message: e.to_string(),
        };
        let mut resp = self.agent.get(url).call().map_err(fail)?;
        resp.body_mut().read_to_string().map_err(fail)
    }
}

fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    s.replace("&nbsp;", " ")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&apos;", "'")
        .replace("&amp;", "&")
}

fn find_ci(haystack: &str, needle: &str, from: usize) -> Option<usize> {
    haystack[from..]
        .to_ascii_lowercase()
        .find(needle)
        .map(|i| i + from)
}

/// Contents of the first `<title>` element, whitespace-collapsed.
pub fn page_title(html: &str) -> Option<String> {
    let open = find_ci(html, "<title", 0)?;
    let start = html[open..].find('>')? + open + 1;
    let end = find_ci(html, "</title", start)?;
    let title = decode_entities(&html[start..end])
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    (!title.is_empty()).then_some(title)
}

/// Visible text of an HTML document: tags removed, `head`/`script`/`style`
/// bodies dropped, common entities decoded, whitespace collapsed.
pub fn html_to_text(html: &str) -> String {
    const SKIP: [&str; 4] = ["head", "script", "style", "noscript"];
    let mut out = String::with_capacity(html.len());
    let mut i = 0;
    while i < html.len() {
        let rest = &html[i..];
        if rest.starts_with("<!--") {
            i += rest.find("-->").map_or(rest.len(), |e| e + 3);
            continue;
        }
        if rest.starts_with('<') {
            let Some(close) = rest.find('>') else {
                break;
            };
            let tag = rest[1..close]
                .trim_start_matches('/')
                .split(|c: char| c.is_whitespace() || c == '/')
                .next()
                .unwrap_or("")
                .to_ascii_lowercase();
            i += close + 1;
            if !rest[1..].starts_with('/') && SKIP.contains(&tag.as_str()) {
                let end_tag = format!("</{tag}");
                i = match find_ci(html, &end_tag, i) {
                    Some(e) => html[e..].find('>').map_or(html.len(), |g| e + g + 1),
                    None => html.len(),
                };
            }
            out.push(' ');
            continue;
        }
        let next = rest.find('<').unwrap_or(rest.len());
        out.push_str(&rest[..next]);
        i += next;
    }
    decode_entities(&out)
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Split after `.`, `!` or `?` when followed by whitespace or the end.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(idx, c)) in chars.iter().enumerate() {
        if matches!(c, '.' | '!' | '?') {
            let at_end = k + 1 == chars.len();
            if at_end || chars[k + 1].1.is_whitespace() {
                let end = idx + c.len_utf8();
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s.to_string());
                }
                start = end;
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

/// Keep the `passages_kept` best windows of `passage_window_sentences`
/// consecutive sentences, re-joined in document order. Ties favor earlier
/// windows.
pub fn distill_text(text: &str, query: &str, params: &Bm25Params) -> Result<String, DistillError> {
    let query_tokens = tokenize(query);
    if query.trim().is_empty() {
        return Err(DistillError::EmptyQuery);
    }
    let sentences = split_sentences(text);
    if sentences.is_empty() {
        return Err(DistillError::EmptyPage(String::new()));
    }
    let window = params.passage_window_sentences.max(1);
    let windows: Vec<String> = sentences.chunks(window).map(|w| w.join(" ")).collect();
    let tokenized: Vec<Vec<String>> = windows.iter().map(|w| tokenize(w)).collect();
    let stats = CorpusStats::from_passages(&tokenized);
    let mut ranked: Vec<(usize, f64)> = tokenized
        .iter()
        .enumerate()
        .map(|(i, p)| (i, bm25_score(&query_tokens, p, &stats, params)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut keep: Vec<usize> = ranked
        .into_iter()
        .take(params.passages_kept.max(1))
        .map(|(i, _)| i)
        .collect();
    keep.sort_unstable();
    Ok(keep
        .into_iter()
        .map(|i| windows[i].as_str())
        .collect::<Vec<_>>()
        .join(" "))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistilledPage {
    pub title: Option<String>,
    pub content: String,
}

pub fn fetch_and_distill(
    source: &dyn PageSource,
    url: &str,
    query: &str,
    params: &Bm25Params,
) -> Result<DistilledPage, DistillError> {
    if query.trim().is_empty() {
        return Err(DistillError::EmptyQuery);
    }
    let html = source.fetch(url)?;
    let text = html_to_text(&html);
    let content = distill_text(&text, query, params).map_err(|e| match e {
        DistillError::EmptyPage(_) => DistillError::EmptyPage(url.to_string()),
        other => other,
    })?;
    Ok(DistilledPage {
        title: page_title(&html),
        content,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ten_sentence_page() -> (String, Vec<String>) {
        let sentences: Vec<String> = (1..=10)
            .map(|i| match i {
                3 => "The observatory opened to visitors in 1931.".to_string(),
                7 => "Its telescope dome was rebuilt after the observatory fire.".to_string(),
                n => format!("Filler sentence number {n} talks about gardens and weather."),
            })
            .collect();
        let html = format!(
            "<html><head><title>Griffith Hill</title><style>p {{color: red}}</style></head>\
             <body><h1>About</h1><p>{}</p><script>var observatory = 1;</script></body></html>",
            sentences.join(" ")
        );
        (html, sentences)
    }

    #[test]
    fn strips_markup() {
        let (html, sentences) = ten_sentence_page();
        let text = html_to_text(&html);
        assert!(!text.contains('<'));
        assert!(!text.contains("color"));
        assert!(!text.contains("var observatory"));
        assert!(!text.contains("Griffith"));
        assert_eq!(text, format!("About {}", sentences.join(" ")));
        assert_eq!(page_title(&html).as_deref(), Some("Griffith Hill"));
    }

    #[test]
    fn entities_and_comments() {
        let t = html_to_text("<p>A &amp; B<!-- hidden -->&nbsp;C.</p>");
        assert_eq!(t, "A & B C.");
    }

    #[test]
    fn sentence_splitting() {
        assert_eq!(
            split_sentences("One. Two! Three? 3.14 is pi. tail"),
            ["One.", "Two!", "Three?", "3.14 is pi.", "tail"]
        );
        assert!(split_sentences("   ").is_empty());
    }

    #[test]
    fn selects_query_bearing_sentences_in_document_order() {
        let (html, sentences) = ten_sentence_page();
        let mut pages = PageFixtures::default();
        pages.insert("http://page", html.clone());
        let params = Bm25Params {
            passage_window_sentences: 1,
            passages_kept: 2,
            ..Default::default()
        };
        let page = fetch_and_distill(&pages, "http://page", "observatory", &params).unwrap();

        // Oracle: score every window exhaustively and keep the positive ones.
        let text = html_to_text(&html);
        let windows = split_sentences(&text);
        let toks: Vec<Vec<String>> = windows.iter().map(|w| tokenize(w)).collect();
        let stats = CorpusStats::from_passages(&toks);
        let positive: Vec<&str> = windows
            .iter()
            .zip(&toks)
            .filter(|(_, t)| bm25_score(&tokenize("observatory"), t, &stats, &params) > 0.0)
            .map(|(w, _)| w.as_str())
            .collect();
        assert_eq!(positive, [sentences[2].as_str(), sentences[6].as_str()]);
        assert_eq!(page.content, format!("{} {}", sentences[2], sentences[6]));
        assert_eq!(page.title.as_deref(), Some("Griffith Hill"));
    }

    #[test]
    fn keeping_everything_returns_whole_page() {
        let text = "A one. B two. C three. D four.";
        let params = Bm25Params {
            passage_window_sentences: 3,
            passages_kept: 5,
            ..Default::default()
        };
        assert_eq!(distill_text(text, "three", &params).unwrap(), text);
    }

    #[test]
    fn empty_page_and_missing_url() {
        let mut pages = PageFixtures::default();
        pages.insert("http://empty", "<html><body>  </body></html>");
        let params = Bm25Params::default();
        assert_eq!(
            fetch_and_distill(&pages, "http://empty", "q", &params),
            Err(DistillError::EmptyPage("http://empty".into()))
        );
        assert!(matches!(
            fetch_and_distill(&pages, "http://nope", "q", &params),
            Err(DistillError::Fetch { .. })
        ));
    }

    #[test]
    fn output_is_subsequence_of_sentences() {
        let text = "Alpha beta. Gamma delta! Beta gamma? Epsilon. Zeta beta. Eta theta.";
        let sentences = split_sentences(text);
        for window in 1..4 {
            for kept in 1..4 {
                let params = Bm25Params {
                    passage_window_sentences: window,
                    passages_kept: kept,
                    ..Default::default()
                };
                let out = distill_text(text, "beta", &params).unwrap();
                let got = split_sentences(&out);
                let mut it = sentences.iter();
                assert!(got.iter().all(|s| it.any(|t| t == s)), "{got:?}");
            }
        }
    }

    #[test]
    fn manifest_loading() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.html"), "<title>A</title><p>Hi.</p>").unwrap();
        std::fs::write(
            dir.path().join("manifest.jsonl"),
            "{\"url\": \"http://a\", \"path\": \"a.html\"}\n\
             {\"url\": \"http://b\", \"html\": \"<p>Inline.</p>\"}\n",
        )
        .unwrap();
        let pages = PageFixtures::load(&dir.path().join("manifest.jsonl")).unwrap();
        assert!(pages.fetch("http://a").unwrap().contains("Hi."));
        assert_eq!(pages.fetch("http://b").unwrap(), "<p>Inline.</p>");

        std::fs::write(dir.path().join("bad.jsonl"), "{\"url\": \"http://c\"}\n").unwrap();
        assert!(PageFixtures::load(&dir.path().join("bad.jsonl")).is_err());
    }
}
