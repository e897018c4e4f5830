//! MediaWiki Action API client for revision histories.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use super::http::{HttpError, HttpFetcher};
use super::types::{ArticleSnapshot, EvaluationWindow, RevisionMeta};

pub const ENGLISH_WIKIPEDIA_API: &str = "https://en.wikipedia.org/w/api.php";

#[derive(Debug, Error)]
pub enum RevisionError {
    #[error("page not found: {0}")]
    PageNotFound(String),
    #[error("revision {0} not found")]
    RevisionNotFound(u64),
    #[error("MediaWiki API error {code}: {info}")]
    Api { code: String, info: String },
    #[error("malformed API response: {0}")]
    Malformed(String),
    #[error(transparent)]
    Http(#[from] HttpError),
}

#[derive(Debug, Deserialize)]
struct RawRevision {
    revid: u64,
    #[serde(default)]
    parentid: u64,
    timestamp: DateTime<Utc>,
    #[serde(default)]
    user: String,
    #[serde(default)]
    comment: String,
    #[serde(default)]
    tags: Vec<String>,
    #[serde(default)]
    slots: Option<BTreeMap<String, RawSlot>>,
    #[serde(rename = "*", default)]
    legacy_content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawSlot {
    #[serde(default)]
    content: Option<String>,
    #[serde(rename = "*", default)]
    legacy_content: Option<String>,
}

impl RawRevision {
    fn meta(&self) -> RevisionMeta {
        RevisionMeta {
            revision_id: self.revid,
            parent_id: (self.parentid != 0).then_some(self.parentid),
            timestamp: self.timestamp,
            editor: self.user.clone(),
            comment: self.comment.clone(),
            tags: self.tags.clone(),
        }
    }

    fn content(&self) -> Option<&str> {
        self.slots
            .as_ref()
            .and_then(|s| s.get("main"))
            .and_then(|m| m.content.as_deref().or(m.legacy_content.as_deref()))
            .or(self.legacy_content.as_deref())
    }
}

pub struct MediaWikiClient {
    api_url: String,
    http: Arc<HttpFetcher>,
}

const META_PROPS: &str = "ids|timestamp|user|comment|tags";

impl MediaWikiClient {
    pub fn new(api_url: impl Into<String>, http: Arc<HttpFetcher>) -> Self {
        Self { api_url: api_url.into(), http }
    }

    pub fn api_url(&self) -> &str {
        &self.api_url
    }

    /// All revisions of `page_title` with timestamps in the window, ascending.
    /// Follows `continue` tokens until the listing is exhausted.
    pub fn fetch_revisions(&self, page_title: &str, window: &EvaluationWindow) -> Result<Vec<RevisionMeta>, RevisionError> {
        let start = iso(window.start());
        let end = iso(window.end());
        let base = [
            ("rvdir", "newer"),
            ("rvstart", start.as_str()),
            ("rvend", end.as_str()),
            ("rvlimit", "max"),
        ];
        let mut revisions = self.list(page_title, &base)?;
        revisions.retain(|r| window.contains(r.timestamp));
        revisions.sort_by_key(|r| (r.timestamp, r.revision_id));
        revisions.dedup_by_key(|r| r.revision_id);
        Ok(revisions)
    }

    /// The latest revision at or before `at`, i.e. the article version `W`
    /// at the start of an evaluation window.
    pub fn fetch_revision_at(&self, page_title: &str, at: DateTime<Utc>) -> Result<Option<RevisionMeta>, RevisionError> {
        let start = iso(at);
        let params = [("rvdir", "older"), ("rvstart", start.as_str()), ("rvlimit", "1")];
        let page = self.query_page(page_title, &params, &[])?;
        Ok(page.0.into_iter().next().map(|r| r.meta()))
    }

    fn list(&self, page_title: &str, base: &[(&str, &str)]) -> Result<Vec<RevisionMeta>, RevisionError> {
        let mut out = Vec::new();
        let mut cont: Vec<(String, String)> = Vec::new();
        loop {
            let (revs, next) = self.query_page(page_title, base, &cont)?;
            out.extend(revs.iter().map(RawRevision::meta));
            match next {
                Some(c) if c != cont => cont = c,
                Some(_) => return Err(RevisionError::Malformed("continuation token did not advance".into())),
                None => return Ok(out),
            }
        }
    }

    #[allow(clippy::type_complexity)]
    fn query_page(
        &self,
        page_title: &str,
        extra: &[(&str, &str)],
        cont: &[(String, String)],
    ) -> Result<(Vec<RawRevision>, Option<Vec<(String, String)>>), RevisionError> {
        let mut params: Vec<(&str, &str)> = vec![
            ("action", "query"),
            ("format", "json"),
            ("formatversion", "2"),
            ("prop", "revisions"),
            ("titles", page_title),
            ("rvprop", META_PROPS),
        ];
        params.extend_from_slice(extra);
        params.extend(cont.iter().map(|(k, v)| (k.as_str(), v.as_str())));
        let json = self.call(&params)?;
        let page = first_page(&json)?;
        if page.get("missing").is_some_and(|m| m != &Value::Bool(false)) || page.get("invalid").is_some() {
            return Err(RevisionError::PageNotFound(page_title.to_string()));
        }
        let revisions: Vec<RawRevision> = match page.get("revisions") {
            Some(r) => serde_json::from_value(r.clone()).map_err(|e| RevisionError::Malformed(e.to_string()))?,
            None => Vec::new(),
        };
        let next = json.get("continue").and_then(Value::as_object).map(|obj| {
            obj.iter()
                .map(|(k, v)| (k.clone(), v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string())))
                .collect::<Vec<_>>()
        });
        Ok((revisions, next))
    }

    /// The full wikitext of one revision. Responses are cached, so repeated
    /// calls return byte-identical text.
    pub fn fetch_snapshot(&self, page_title: &str, revision_id: u64) -> Result<ArticleSnapshot, RevisionError> {
        let id = revision_id.to_string();
        let params = [
            ("action", "query"),
            ("format", "json"),
            ("formatversion", "2"),
            ("prop", "revisions"),
            ("revids", id.as_str()),
            ("rvprop", "ids|timestamp|user|comment|tags|content"),
            ("rvslots", "main"),
        ];
        let (json, recorded_at) = self.call_with_time(&params)?;
        if json.pointer("/query/badrevids").is_some() {
            return Err(RevisionError::RevisionNotFound(revision_id));
        }
        let page = first_page(&json).map_err(|_| RevisionError::RevisionNotFound(revision_id))?;
        let title = page.get("title").and_then(Value::as_str).unwrap_or(page_title).to_string();
        let raw: Vec<RawRevision> = page
            .get("revisions")
            .map(|r| serde_json::from_value(r.clone()))
            .transpose()
            .map_err(|e| RevisionError::Malformed(e.to_string()))?
            .unwrap_or_default();
        let rev = raw
            .into_iter()
            .find(|r| r.revid == revision_id)
            .ok_or(RevisionError::RevisionNotFound(revision_id))?;
        let wikitext = rev
            .content()
            .ok_or_else(|| RevisionError::Malformed(format!("revision {revision_id} has no main-slot content")))?
            .to_string();
        Ok(ArticleSnapshot { page_title: title, revision: rev.meta(), wikitext, fetched_at: recorded_at })
    }

    fn call(&self, params: &[(&str, &str)]) -> Result<Value, RevisionError> {
        self.call_with_time(params).map(|(v, _)| v)
    }

    fn call_with_time(&self, params: &[(&str, &str)]) -> Result<(Value, DateTime<Utc>), RevisionError> {
        let resp = self.http.get(&self.api_url, params)?;
        if !resp.is_success() {
            return Err(HttpError::Status { url: resp.url, status: resp.status }.into());
        }
        let json: Value = serde_json::from_str(&resp.body).map_err(|e| RevisionError::Malformed(e.to_string()))?;
        if let Some(err) = json.get("error") {
            let code = err.get("code").and_then(Value::as_str).unwrap_or("unknown").to_string();
            let info = err.get("info").and_then(Value::as_str).unwrap_or_default().to_string();
            if code == "nosuchrevid" {
                let id = params.iter().find(|(k, _)| *k == "revids").and_then(|(_, v)| v.parse().ok()).unwrap_or(0);
                return Err(RevisionError::RevisionNotFound(id));
            }
            if code == "ratelimited" || code == "maxlag" {
                return Err(HttpError::RateLimited { url: self.api_url.clone(), attempts: 1 }.into());
            }
            return Err(RevisionError::Api { code, info });
        }
        Ok((json, resp.recorded_at))
    }
}

fn first_page(json: &Value) -> Result<&Value, RevisionError> {
    let pages = json
        .pointer("/query/pages")
        .ok_or_else(|| RevisionError::Malformed("response has no query.pages".into()))?;
    match pages {
        Value::Array(a) => a.first(),
        Value::Object(o) => o.values().next(),
        _ => None,
    }
    .ok_or_else(|| RevisionError::Malformed("empty query.pages".into()))
}

fn iso(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}
