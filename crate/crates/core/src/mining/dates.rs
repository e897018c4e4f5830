use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use chrono::NaiveDate;
use regex::Regex;
use scraper::{Html, Selector};
use serde_json::Value;
use tracing::warn;

use crate::revision::http::HttpFetcher;

/// Meta tag names and properties consulted after `article:published_time`,
/// in priority order.
const META_KEYS: [&str; 11] = [
    "article:published_time",
    "og:article:published_time",
    "og:published_time",
    "datepublished",
    "pubdate",
    "publishdate",
    "publish-date",
    "parsely-pub-date",
    "sailthru.date",
    "dc.date.issued",
    "dc.date",
];

fn selector(cell: &'static OnceLock<Selector>, css: &str) -> &'static Selector {
    cell.get_or_init(|| Selector::parse(css).expect("static selector"))
}

/// Publication date of a web page from, in order: meta tags, structured
/// data (JSON-LD and `itemprop="datePublished"`), and date patterns in the
/// URL.
pub fn extract_publication_date(html: &str, url: &str) -> Option<NaiveDate> {
    let doc = Html::parse_document(html);
    meta_date(&doc).or_else(|| structured_date(&doc)).or_else(|| url_date(url))
}

fn meta_date(doc: &Html) -> Option<NaiveDate> {
    static META: OnceLock<Selector> = OnceLock::new();
    let mut found: HashMap<String, String> = HashMap::new();
    for el in doc.select(selector(&META, "meta")) {
        let v = el.value();
        let key = v.attr("property").or_else(|| v.attr("name")).or_else(|| v.attr("itemprop"));
        if let (Some(k), Some(content)) = (key, v.attr("content")) {
            found.entry(k.trim().to_ascii_lowercase()).or_insert_with(|| content.to_string());
        }
    }
    META_KEYS.iter().find_map(|k| found.get(*k).and_then(|c| parse_date_prefix(c)))
}

fn structured_date(doc: &Html) -> Option<NaiveDate> {
    static LD: OnceLock<Selector> = OnceLock::new();
    static ITEMPROP: OnceLock<Selector> = OnceLock::new();
    for script in doc.select(selector(&LD, r#"script[type="application/ld+json"]"#)) {
        let raw: String = script.text().collect();
        if let Ok(json) = serde_json::from_str::<Value>(raw.trim()) {
            if let Some(d) = find_date_published(&json) {
                return Some(d);
            }
        }
    }
    doc.select(selector(&ITEMPROP, r#"[itemprop="datePublished"]"#)).find_map(|el| {
        let v = el.value();
        v.attr("datetime").or_else(|| v.attr("content")).and_then(parse_date_prefix)
    })
}

fn find_date_published(v: &Value) -> Option<NaiveDate> {
    match v {
        Value::Object(map) => map
            .get("datePublished")
            .and_then(Value::as_str)
            .and_then(parse_date_prefix)
            .or_else(|| map.values().find_map(find_date_published)),
        Value::Array(items) => items.iter().find_map(find_date_published),
        _ => None,
    }
}

fn url_date(url: &str) -> Option<NaiveDate> {
    static URL_DATE: OnceLock<Regex> = OnceLock::new();
    let re = URL_DATE.get_or_init(|| {
        Regex::new(r"[/_-]((?:19|20)\d{2})[/-](\d{1,2})[/-](\d{1,2})(?:[/_.-]|$)").expect("static regex")
    });
    re.captures_iter(url).find_map(|c| {
        NaiveDate::from_ymd_opt(c[1].parse().ok()?, c[2].parse().ok()?, c[3].parse().ok()?)
    })
}

/// Leading `YYYY-MM-DD` (or `YYYY/MM/DD`) of a timestamp string.
fn parse_date_prefix(s: &str) -> Option<NaiveDate> {
    static PREFIX: OnceLock<Regex> = OnceLock::new();
    let re = PREFIX.get_or_init(|| Regex::new(r"^\s*(\d{4})[-/](\d{2})[-/](\d{2})").expect("static regex"));
    let c = re.captures(s)?;
    NaiveDate::from_ymd_opt(c[1].parse().ok()?, c[2].parse().ok()?, c[3].parse().ok()?)
}

/// Resolves and memoizes publication dates of cited sources. Network
/// failures resolve to `None`.
pub struct DateResolver {
    http: Arc<HttpFetcher>,
    memo: Mutex<HashMap<String, Option<NaiveDate>>>,
}

impl DateResolver {
    pub fn new(http: Arc<HttpFetcher>) -> Self {
        Self { http, memo: Mutex::new(HashMap::new()) }
    }

    pub fn resolve_publication_date(&self, url: &str) -> Option<NaiveDate> {
        if let Some(hit) = self.memo.lock().expect("date memo poisoned").get(url) {
            return *hit;
        }
        let date = match self.http.get(url, &[]) {
            Ok(resp) if resp.is_success() => extract_publication_date(&resp.body, url),
            Ok(resp) => {
                warn!(url, status = resp.status, "publication date lookup failed");
                None
            }
            Err(e) => {
                warn!(url, error = %e, "publication date lookup failed");
                None
            }
        };
        self.memo.lock().expect("date memo poisoned").insert(url.to_string(), date);
        date
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> Option<NaiveDate> {
        NaiveDate::from_ymd_opt(y, m, day)
    }

    #[test]
    fn meta_published_time() {
        let html = r#"<html><head><meta property="article:published_time" content="2024-03-01T08:00:00Z"></head></html>"#;
        assert_eq!(extract_publication_date(html, "https://n.example/x"), d(2024, 3, 1));
    }

    #[test]
    fn meta_beats_json_ld_and_url() {
        let html = r#"<head><meta name="pubdate" content="2024-02-02">
            <script type="application/ld+json">{"datePublished":"2023-01-01"}</script></head>"#;
        assert_eq!(extract_publication_date(html, "https://n.example/2022/05/05/x"), d(2024, 2, 2));
    }

    #[test]
    fn json_ld_graph() {
        let html = r#"<script type="application/ld+json">{"@graph":[{"@type":"WebPage"},{"@type":"NewsArticle","datePublished":"2024-06-10T12:00:00+02:00"}]}</script>"#;
        assert_eq!(extract_publication_date(html, "https://n.example/x"), d(2024, 6, 10));
    }

    #[test]
    fn url_fallback_and_none() {
        assert_eq!(extract_publication_date("<p>x</p>", "https://n.example/sport/2024/01/09/race"), d(2024, 1, 9));
        assert_eq!(extract_publication_date("<p>x</p>", "https://n.example/story-2024-07-30.html"), d(2024, 7, 30));
        assert_eq!(extract_publication_date("<p>x</p>", "https://n.example/a/b"), None);
    }
}
