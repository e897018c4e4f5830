//! Single-page source fetching with boilerplate removal.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use scraper::{ElementRef, Html, Node, Selector};
use serde::Deserialize;
use thiserror::Error;

use crate::revision::http::{HttpError, HttpFetcher};

pub const DEFAULT_MAX_CHARS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedPage {
    pub url: String,
    pub title: String,
    /// Main-content text, paragraphs separated by blank lines.
    pub text: String,
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("not an http(s) URL: {0}")]
    InvalidUrl(String),
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("fetching {url} returned HTTP {status}")]
    Status { url: String, status: u16 },
    #[error("unsupported content at {url}: {content_type}")]
    Unsupported { url: String, content_type: String },
    #[error("no readable text at {0}")]
    Empty(String),
    #[error("page fixture {path}: {message}")]
    Fixture { path: String, message: String },
}

pub trait PageFetcher: Send + Sync {
    fn fetch(&self, url: &str) -> Result<FetchedPage, FetchError>;
}

fn selector(cell: &'static OnceLock<Selector>, css: &str) -> &'static Selector {
    cell.get_or_init(|| Selector::parse(css).expect("static selector"))
}

const SKIP: &[&str] = &[
    "script", "style", "noscript", "nav", "header", "footer", "aside", "form", "button", "svg", "iframe", "template",
    "figure", "menu",
];

const BLOCK: &[&str] = &[
    "p", "div", "section", "article", "main", "li", "ul", "ol", "h1", "h2", "h3", "h4", "h5", "h6", "blockquote",
    "pre", "table", "tr", "br", "dd", "dt",
];

fn is_boilerplate(el: &scraper::node::Element) -> bool {
    if SKIP.contains(&el.name()) {
        return true;
    }
    if matches!(el.attr("role"), Some("navigation" | "banner" | "contentinfo" | "complementary")) {
        return true;
    }
    if el.attr("aria-hidden") == Some("true") {
        return true;
    }
    let marker = format!("{} {}", el.attr("class").unwrap_or_default(), el.attr("id").unwrap_or_default()).to_lowercase();
    ["cookie", "newsletter", "share", "related", "advert", "promo", "subscribe", "breadcrumb", "comments"]
        .iter()
        .any(|m| marker.split(|c: char| !c.is_alphanumeric()).any(|tok| tok == *m))
}

fn collect(node: ego_tree::NodeRef<'_, Node>, out: &mut String) {
    match node.value() {
        Node::Text(t) => out.push_str(t),
        Node::Element(el) => {
            if is_boilerplate(el) {
                return;
            }
            let block = BLOCK.contains(&el.name());
            if block {
                out.push_str("\n\n");
            }
            for child in node.children() {
                collect(child, out);
            }
            if block {
                out.push_str("\n\n");
            }
        }
        _ => {
            for child in node.children() {
                collect(child, out);
            }
        }
    }
}

fn tidy(raw: &str) -> String {
    raw.split("\n\n")
        .map(|p| p.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Truncates to at most `max_chars` characters on a char boundary.
pub fn cap_chars(s: &str, max_chars: usize) -> &str {
    match s.char_indices().nth(max_chars) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Title and main-content text of an HTML document. The content root is the
/// first `<article>`, `<main>` or `[role=main]` element, falling back to
/// `<body>`; navigation, headers, footers, scripts and similar chrome are
/// dropped.
pub fn extract_main_content(html: &str, max_chars: usize) -> (String, String) {
    static TITLE: OnceLock<Selector> = OnceLock::new();
    static ROOTS: OnceLock<Selector> = OnceLock::new();
    static BODY: OnceLock<Selector> = OnceLock::new();
    let doc = Html::parse_document(html);
    let title = doc
        .select(selector(&TITLE, "title"))
        .next()
        .map(|t| t.text().collect::<String>().split_whitespace().collect::<Vec<_>>().join(" "))
        .unwrap_or_default();
    let root: Option<ElementRef<'_>> = doc
        .select(selector(&ROOTS, "article, main, [role=main]"))
        .next()
        .or_else(|| doc.select(selector(&BODY, "body")).next());
    let mut raw = String::new();
    match root {
        Some(r) => {
            for child in r.children() {
                collect(child, &mut raw);
            }
        }
        None => collect(doc.tree.root(), &mut raw),
    }
    let text = tidy(&raw);
    (title, cap_chars(&text, max_chars).to_string())
}

fn looks_like_html(content_type: Option<&str>, body: &str) -> bool {
    match content_type {
        Some(ct) => {
            let ct = ct.to_ascii_lowercase();
            ct.contains("text/html") || ct.contains("application/xhtml")
        }
        None => body.trim_start().starts_with('<'),
    }
}

fn check_url(url: &str) -> Result<(), FetchError> {
    let lower = url.to_ascii_lowercase();
    if !(lower.starts_with("http://") || lower.starts_with("https://")) {
        return Err(FetchError::InvalidUrl(url.to_string()));
    }
    let path = lower.split(['?', '#']).next().unwrap_or_default();
    if path.ends_with(".pdf") {
        return Err(FetchError::Unsupported { url: url.to_string(), content_type: "application/pdf".into() });
    }
    Ok(())
}

pub struct HttpPageFetcher {
    http: Arc<HttpFetcher>,
    max_chars: usize,
}

impl HttpPageFetcher {
    pub fn new(http: Arc<HttpFetcher>) -> Self {
        Self { http, max_chars: DEFAULT_MAX_CHARS }
    }

    pub fn with_max_chars(mut self, max_chars: usize) -> Self {
        self.max_chars = max_chars;
        self
    }
}

impl PageFetcher for HttpPageFetcher {
    fn fetch(&self, url: &str) -> Result<FetchedPage, FetchError> {
        check_url(url)?;
        let resp = self.http.get(url, &[])?;
        if !resp.is_success() {
            return Err(FetchError::Status { url: url.to_string(), status: resp.status });
        }
        if !looks_like_html(resp.content_type.as_deref(), &resp.body) {
            return Err(FetchError::Unsupported {
                url: url.to_string(),
                content_type: resp.content_type.unwrap_or_else(|| "unknown".into()),
            });
        }
        page_from_html(url, &resp.body, self.max_chars)
    }
}

fn page_from_html(url: &str, html: &str, max_chars: usize) -> Result<FetchedPage, FetchError> {
    let (title, text) = extract_main_content(html, max_chars);
    if text.is_empty() {
        return Err(FetchError::Empty(url.to_string()));
    }
    Ok(FetchedPage { url: url.to_string(), title, text })
}

#[derive(Deserialize)]
struct FixtureIndexEntry {
    url: String,
    file: String,
}

/// Offline fetcher over a directory holding `index.json`
/// (`[{"url": ..., "file": ...}]`) and the referenced HTML files. Unknown
/// URLs behave like a 404.
pub struct FixturePageFetcher {
    pages: HashMap<String, String>,
    max_chars: usize,
}

impl FixturePageFetcher {
    pub fn new(pages: HashMap<String, String>) -> Self {
        Self { pages, max_chars: DEFAULT_MAX_CHARS }
    }

    pub fn load(dir: &Path) -> Result<Self, FetchError> {
        let err = |path: &Path, message: String| FetchError::Fixture { path: path.display().to_string(), message };
        let index_path = dir.join("index.json");
        let index = std::fs::read_to_string(&index_path).map_err(|e| err(&index_path, e.to_string()))?;
        let entries: Vec<FixtureIndexEntry> = serde_json::from_str(&index).map_err(|e| err(&index_path, e.to_string()))?;
        let mut pages = HashMap::new();
        for entry in entries {
            let path = dir.join(&entry.file);
            let html = std::fs::read_to_string(&path).map_err(|e| err(&path, e.to_string()))?;
            pages.insert(entry.url, html);
        }
        Ok(Self::new(pages))
    }

    pub fn with_max_chars(mut self, max_chars: usize) -> Self {
        self.max_chars = max_chars;
        self
    }

    /// Raw HTML of a fixture page.
    pub fn html(&self, url: &str) -> Option<&str> {
        self.pages.get(url).map(String::as_str)
    }
}

impl PageFetcher for FixturePageFetcher {
    fn fetch(&self, url: &str) -> Result<FetchedPage, FetchError> {
        check_url(url)?;
        let html = self.pages.get(url).ok_or_else(|| FetchError::Status { url: url.to_string(), status: 404 })?;
        page_from_html(url, html, self.max_chars)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAGE: &str = r#"<html><head><title>Hamilton signs for Ferrari</title><script>var x=1;</script></head>
<body><nav><a href="/">Home</a> <a href="/sport">Sport</a></nav>
<header class="site-header">Daily Racing</header>
<article><h1>Hamilton signs for Ferrari</h1>
<p>Lewis Hamilton will join   Ferrari in 2025.</p>
<div class="share-tools">Share this</div>
<p>The deal was announced on Thursday.</p></article>
<footer>Copyright</footer></body></html>"#;

    #[test]
    fn keeps_article_body_only() {
        let (title, text) = extract_main_content(PAGE, DEFAULT_MAX_CHARS);
        assert_eq!(title, "Hamilton signs for Ferrari");
        assert_eq!(
            text,
            "Hamilton signs for Ferrari\n\nLewis Hamilton will join Ferrari in 2025.\n\nThe deal was announced on Thursday."
        );
    }

    #[test]
    fn body_fallback_and_cap() {
        let (_, text) = extract_main_content("<body><nav>menu</nav><p>héllo world</p></body>", 4);
        assert_eq!(text, "héll");
    }

    #[test]
    fn fixture_fetcher_errors() {
        let f = FixturePageFetcher::new(HashMap::from([("https://a/x".to_string(), PAGE.to_string())]));
        assert!(f.fetch("https://a/x").unwrap().text.contains("Thursday"));
        assert!(matches!(f.fetch("https://a/missing"), Err(FetchError::Status { status: 404, .. })));
        assert!(matches!(f.fetch("https://a/report.pdf"), Err(FetchError::Unsupported { .. })));
        assert!(matches!(f.fetch("ftp://a/x"), Err(FetchError::InvalidUrl(_))));
    }
}
