//! Where revisions come from: the live MediaWiki API or a directory of
//! JSON fixtures.

use std::collections::HashMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::store::title_slug;
use super::{ArticleSnapshot, EvaluationWindow, MediaWikiClient, RevisionError, RevisionMeta};

pub trait RevisionSource: Send + Sync {
    /// Revisions with timestamps inside the window, oldest first.
    fn fetch_revisions(&self, page_title: &str, window: &EvaluationWindow) -> Result<Vec<RevisionMeta>, RevisionError>;
    /// The latest revision at or before `at`.
    fn fetch_revision_at(&self, page_title: &str, at: DateTime<Utc>) -> Result<Option<RevisionMeta>, RevisionError>;
    fn fetch_snapshot(&self, page_title: &str, revision_id: u64) -> Result<ArticleSnapshot, RevisionError>;
}

impl RevisionSource for MediaWikiClient {
    fn fetch_revisions(&self, page_title: &str, window: &EvaluationWindow) -> Result<Vec<RevisionMeta>, RevisionError> {
        MediaWikiClient::fetch_revisions(self, page_title, window)
    }

    fn fetch_revision_at(&self, page_title: &str, at: DateTime<Utc>) -> Result<Option<RevisionMeta>, RevisionError> {
        MediaWikiClient::fetch_revision_at(self, page_title, at)
    }

    fn fetch_snapshot(&self, page_title: &str, revision_id: u64) -> Result<ArticleSnapshot, RevisionError> {
        MediaWikiClient::fetch_snapshot(self, page_title, revision_id)
    }
}

/// The article as of the window start followed by every revision inside
/// the window, oldest first. The baseline is omitted for pages created
/// inside the window.
pub fn window_snapshots(
    source: &dyn RevisionSource,
    page_title: &str,
    window: &EvaluationWindow,
) -> Result<Vec<ArticleSnapshot>, RevisionError> {
    let mut metas = Vec::new();
    if let Some(base) = source.fetch_revision_at(page_title, window.start())? {
        metas.push(base);
    }
    for meta in source.fetch_revisions(page_title, window)? {
        if metas.iter().all(|m: &RevisionMeta| m.revision_id != meta.revision_id) {
            metas.push(meta);
        }
    }
    metas.iter().map(|m| source.fetch_snapshot(page_title, m.revision_id)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRevision {
    #[serde(flatten)]
    pub meta: RevisionMeta,
    pub wikitext: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureHistory {
    pub title: String,
    pub revisions: Vec<FixtureRevision>,
}

/// Reads `<title-slug>.json` files, each a [`FixtureHistory`]. Snapshot
/// `fetched_at` is the revision timestamp so runs are reproducible.
pub struct FixtureRevisionSource {
    pages: HashMap<String, FixtureHistory>,
}

impl FixtureRevisionSource {
    pub fn new(histories: Vec<FixtureHistory>) -> Self {
        let pages = histories
            .into_iter()
            .map(|mut h| {
                h.revisions.sort_by_key(|r| (r.meta.timestamp, r.meta.revision_id));
                (h.title.clone(), h)
            })
            .collect();
        Self { pages }
    }

    pub fn load(dir: &Path) -> Result<Self, RevisionError> {
        let malformed = |p: &Path, e: String| RevisionError::Malformed(format!("{}: {e}", p.display()));
        let mut histories = Vec::new();
        let entries = std::fs::read_dir(dir).map_err(|e| malformed(dir, e.to_string()))?;
        let mut paths: Vec<_> = entries.filter_map(Result::ok).map(|e| e.path()).collect();
        paths.sort();
        for path in paths.into_iter().filter(|p| p.extension().is_some_and(|x| x == "json")) {
            let text = std::fs::read_to_string(&path).map_err(|e| malformed(&path, e.to_string()))?;
            let history: FixtureHistory = serde_json::from_str(&text).map_err(|e| malformed(&path, e.to_string()))?;
            histories.push(history);
        }
        Ok(Self::new(histories))
    }

    pub fn file_name(title: &str) -> String {
        format!("{}.json", title_slug(title))
    }

    fn history(&self, page_title: &str) -> Result<&FixtureHistory, RevisionError> {
        self.pages.get(page_title).ok_or_else(|| RevisionError::PageNotFound(page_title.to_string()))
    }
}

impl RevisionSource for FixtureRevisionSource {
    fn fetch_revisions(&self, page_title: &str, window: &EvaluationWindow) -> Result<Vec<RevisionMeta>, RevisionError> {
        Ok(self.history(page_title)?.revisions.iter().filter(|r| window.contains(r.meta.timestamp)).map(|r| r.meta.clone()).collect())
    }

    fn fetch_revision_at(&self, page_title: &str, at: DateTime<Utc>) -> Result<Option<RevisionMeta>, RevisionError> {
        Ok(self.history(page_title)?.revisions.iter().rfind(|r| r.meta.timestamp <= at).map(|r| r.meta.clone()))
    }

    fn fetch_snapshot(&self, page_title: &str, revision_id: u64) -> Result<ArticleSnapshot, RevisionError> {
        let r = self
            .history(page_title)?
            .revisions
            .iter()
            .find(|r| r.meta.revision_id == revision_id)
            .ok_or(RevisionError::RevisionNotFound(revision_id))?;
        Ok(ArticleSnapshot {
            page_title: page_title.to_string(),
            revision: r.meta.clone(),
            wikitext: r.wikitext.clone(),
            fetched_at: r.meta.timestamp,
        })
    }
}
