//! Date-restricted web search: a Google Programmable Search client and a
//! deterministic fixture client.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::revision::http::{HttpError, HttpFetcher};
use crate::revision::EvaluationWindow;
use crate::text::normalized_tokens;

pub const GOOGLE_CSE_ENDPOINT: &str = "https://www.googleapis.com/customsearch/v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub url: String,
    pub title: String,
    pub snippet: String,
    #[serde(default)]
    pub published: Option<NaiveDate>,
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("search API returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed search response: {0}")]
    Malformed(String),
    #[error("search fixture {path}: {message}")]
    Fixture { path: String, message: String },
}

pub trait SearchClient: Send + Sync {
    /// Results for `query`, best first. Implementations restrict to the
    /// window where the backend supports it; callers still post-filter.
    fn search(&self, query: &str, window: &EvaluationWindow) -> Result<Vec<SearchResult>, SearchError>;
}

/// Drops results whose known publication date lies outside the window.
/// Undated results are kept.
pub fn within_window(results: Vec<SearchResult>, window: &EvaluationWindow) -> Vec<SearchResult> {
    results.into_iter().filter(|r| r.published.is_none_or(|d| window.contains_date(d))).collect()
}

/// Google Programmable Search (Custom Search JSON API) with a date-range
/// sort restriction.
pub struct GoogleSearchClient {
    http: Arc<HttpFetcher>,
    endpoint: String,
    api_key: String,
    engine_id: String,
    results_per_query: u8,
}

impl GoogleSearchClient {
    pub fn new(http: Arc<HttpFetcher>, api_key: impl Into<String>, engine_id: impl Into<String>) -> Self {
        Self {
            http,
            endpoint: GOOGLE_CSE_ENDPOINT.to_string(),
            api_key: api_key.into(),
            engine_id: engine_id.into(),
            results_per_query: 10,
        }
    }

    pub fn with_endpoint(mut self, endpoint: impl Into<String>) -> Self {
        self.endpoint = endpoint.into();
        self
    }
}

/// `sort` parameter value restricting results to the window's dates.
pub fn date_restriction(window: &EvaluationWindow) -> String {
    format!("date:r:{}:{}", window.start().format("%Y%m%d"), window.end().format("%Y%m%d"))
}

impl SearchClient for GoogleSearchClient {
    fn search(&self, query: &str, window: &EvaluationWindow) -> Result<Vec<SearchResult>, SearchError> {
        let sort = date_restriction(window);
        let num = self.results_per_query.to_string();
        let params = [
            ("key", self.api_key.as_str()),
            ("cx", self.engine_id.as_str()),
            ("q", query),
            ("sort", sort.as_str()),
            ("num", num.as_str()),
        ];
        let resp = self.http.get(&self.endpoint, &params)?;
        if !resp.is_success() {
            return Err(SearchError::Status { status: resp.status, body: resp.body });
        }
        let results = parse_google_response(&resp.body)?;
        Ok(within_window(results, window))
    }
}

pub fn parse_google_response(body: &str) -> Result<Vec<SearchResult>, SearchError> {
    let v: Value = serde_json::from_str(body).map_err(|e| SearchError::Malformed(e.to_string()))?;
    let Some(items) = v.get("items") else {
        return Ok(Vec::new());
    };
    let items = items.as_array().ok_or_else(|| SearchError::Malformed("`items` is not an array".into()))?;
    let mut out = Vec::new();
    for item in items {
        let Some(url) = item.get("link").and_then(Value::as_str) else { continue };
        let text = |k: &str| item.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
        let published = item
            .pointer("/pagemap/metatags/0")
            .and_then(|m| {
                ["article:published_time", "og:article:published_time", "datepublished", "date"]
                    .iter()
                    .find_map(|k| m.get(*k).and_then(Value::as_str))
            })
            .and_then(|s| s.get(..10))
            .and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok());
        out.push(SearchResult { url: url.to_string(), title: text("title"), snippet: text("snippet"), published });
    }
    Ok(out)
}

/// Offline search over a fixed result list. A result matches when its title
/// or snippet shares a word with the query; ranking is by the number of
/// shared words, ties broken by fixture order.
pub struct FixtureSearchClient {
    results: Vec<SearchResult>,
}

impl FixtureSearchClient {
    pub fn new(results: Vec<SearchResult>) -> Self {
        Self { results }
    }

    /// Loads a JSON array of results.
    pub fn load(path: &Path) -> Result<Self, SearchError> {
        let err = |message: String| SearchError::Fixture { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let results = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        Ok(Self::new(results))
    }
}

impl SearchClient for FixtureSearchClient {
    fn search(&self, query: &str, window: &EvaluationWindow) -> Result<Vec<SearchResult>, SearchError> {
        let q: HashSet<String> = normalized_tokens(query).into_iter().collect();
        let mut scored: Vec<(usize, usize, &SearchResult)> = self
            .results
            .iter()
            .enumerate()
            .filter_map(|(i, r)| {
                let words: HashSet<String> = normalized_tokens(&format!("{} {}", r.title, r.snippet)).into_iter().collect();
                let overlap = q.intersection(&words).count();
                (overlap > 0).then_some((overlap, i, r))
            })
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(within_window(scored.into_iter().map(|(_, _, r)| r.clone()).collect(), window))
    }
}
