//! Suggestion bundles and reviewer decisions.
//!
//! Bundles are written once by the pipeline. Decisions go to an
//! append-only log and are replayed over the bundles on load, so the
//! materialized statuses can always be rebuilt from the audit trail.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::warn;

use sentinel::editor::EditSuggestion;
use sentinel::revision::{decode_lines, encode_record, EvaluationWindow, Record, StoreError};
use sentinel::text::{token_change, word_diff, DiffSegment};

pub const ERROR_CATEGORIES: [&str; 6] = [
    "stylistic/clarity",
    "subjective content",
    "insignificant change",
    "irrelevant content",
    "factual error",
    "wrong section",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReviewStatus {
    Pending,
    Accepted,
    AcceptedWithRevision,
    Rejected,
}

impl std::str::FromStr for ReviewStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_uppercase())).map_err(|_| format!("unknown status {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewNote {
    pub error_categories: BTreeSet<String>,
    pub revised_text: Option<String>,
    pub reviewer: String,
    pub decided_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionBundle {
    pub id: String,
    pub page_title: String,
    pub window: EvaluationWindow,
    pub config_hash: String,
    pub suggestions: Vec<EditSuggestion>,
    pub statuses: BTreeMap<String, ReviewStatus>,
    pub review_notes: BTreeMap<String, ReviewNote>,
}

impl Record for SuggestionBundle {
    const KIND: &'static str = "suggestion_bundle";
}

pub fn bundle_id(page_title: &str, window: &EvaluationWindow, config_hash: &str) -> String {
    let mut h = Sha256::new();
    for part in [page_title, &window.id(), config_hash] {
        h.update(part.as_bytes());
        h.update([0]);
    }
    hex::encode(&h.finalize()[..8])
}

impl SuggestionBundle {
    pub fn new(page_title: &str, window: EvaluationWindow, config_hash: &str, suggestions: Vec<EditSuggestion>) -> Self {
        let statuses = suggestions.iter().map(|s| (s.id.clone(), ReviewStatus::Pending)).collect();
        Self {
            id: bundle_id(page_title, &window, config_hash),
            page_title: page_title.to_string(),
            window,
            config_hash: config_hash.to_string(),
            suggestions,
            statuses,
            review_notes: BTreeMap::new(),
        }
    }

    pub fn suggestion(&self, id: &str) -> Option<&EditSuggestion> {
        self.suggestions.iter().find(|s| s.id == id)
    }

    pub fn status(&self, id: &str) -> ReviewStatus {
        self.statuses.get(id).copied().unwrap_or(ReviewStatus::Pending)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub status: ReviewStatus,
    #[serde(default)]
    pub error_categories: Vec<String>,
    #[serde(default)]
    pub revised_text: Option<String>,
    pub reviewer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionEvent {
    pub bundle_id: String,
    pub suggestion_id: String,
    pub status: ReviewStatus,
    pub note: ReviewNote,
    pub overwrite: bool,
}

impl Record for DecisionEvent {
    const KIND: &'static str = "review_decision";
}

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("unknown {kind} {id:?}")]
    NotFound { kind: &'static str, id: String },
    #[error("suggestion {id} was already decided as {status:?}")]
    Conflict { id: String, status: ReviewStatus },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn valid_category(c: &str) -> bool {
    ERROR_CATEGORIES.contains(&c) || c == "other" || c.strip_prefix("other:").is_some_and(|t| !t.trim().is_empty())
}

/// Checks a decision against the status invariants and vocabulary.
pub fn validate(req: &DecisionRequest) -> Result<(), ReviewError> {
    let invalid = |m: String| Err(ReviewError::Invalid(m));
    if req.status == ReviewStatus::Pending {
        return invalid("a decision cannot set the status back to PENDING".into());
    }
    if req.reviewer.trim().is_empty() {
        return invalid("reviewer is required".into());
    }
    let has_text = req.revised_text.as_deref().is_some_and(|t| !t.trim().is_empty());
    match (req.status == ReviewStatus::AcceptedWithRevision, has_text) {
        (true, false) => return invalid("ACCEPTED_WITH_REVISION requires a non-empty revised_text".into()),
        (false, true) => return invalid(format!("revised_text is only allowed with ACCEPTED_WITH_REVISION, not {:?}", req.status)),
        _ => {}
    }
    if let Some(bad) = req.error_categories.iter().find(|c| !valid_category(c)) {
        return invalid(format!("unknown error category {bad:?}; expected one of {ERROR_CATEGORIES:?} or \"other: <text>\""));
    }
    Ok(())
}

/// Everything a reviewer sees for one suggestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionView {
    pub bundle_id: String,
    pub entity: String,
    pub wikipedia_url: String,
    pub section_path: String,
    pub paragraph_before: String,
    pub paragraph_after: String,
    pub source_url: String,
    pub source_title: String,
    pub status: ReviewStatus,
    pub review: Option<ReviewNote>,
    pub word_diff: Vec<DiffSegment>,
    pub token_change: usize,
    pub suggestion: EditSuggestion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSummary {
    pub id: String,
    pub page_title: String,
    pub window: String,
    pub total: usize,
    pub counts: BTreeMap<ReviewStatus, usize>,
}

pub fn wikipedia_url(title: &str) -> String {
    let mut out = String::from("https://en.wikipedia.org/wiki/");
    for b in title.trim().bytes() {
        match b {
            b' ' => out.push('_'),
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'_' | b'-' | b'.' | b'(' | b')' | b',' | b':' | b'\'' => out.push(b as char),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

/// On-disk layout under `<data_dir>/bundles`.
pub struct BundleStore {
    dir: PathBuf,
}

impl BundleStore {
    pub fn new(data_dir: &Path) -> Self {
        Self { dir: data_dir.join("bundles") }
    }

    pub fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.record"))
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join("decisions.log")
    }

    fn io(path: &Path) -> impl Fn(std::io::Error) -> ReviewError + '_ {
        move |source| ReviewError::Io { path: path.to_path_buf(), source }
    }

    /// Writes a bundle unless one with the same id exists; existing bundles
    /// are never rewritten.
    pub fn save_if_absent(&self, bundle: &SuggestionBundle) -> Result<bool, ReviewError> {
        let path = self.path(&bundle.id);
        if path.exists() {
            return Ok(false);
        }
        fs::create_dir_all(&self.dir).map_err(Self::io(&self.dir))?;
        let line = encode_record(bundle).map_err(Self::io(&path))?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, format!("{line}\n")).map_err(Self::io(&tmp))?;
        fs::rename(&tmp, &path).map_err(Self::io(&path))?;
        Ok(true)
    }

    pub fn load(&self, id: &str) -> Result<SuggestionBundle, ReviewError> {
        let path = self.path(id);
        let text = fs::read_to_string(&path).map_err(Self::io(&path))?;
        let mut bundles: Vec<SuggestionBundle> = decode_lines(&text, &path)?;
        bundles.pop().ok_or(ReviewError::NotFound { kind: "bundle", id: id.to_string() })
    }

    /// Every bundle, ordered by id.
    pub fn load_all(&self) -> Result<Vec<SuggestionBundle>, ReviewError> {
        let mut ids = Vec::new();
        if self.dir.exists() {
            for entry in fs::read_dir(&self.dir).map_err(Self::io(&self.dir))? {
                let path = entry.map_err(Self::io(&self.dir))?.path();
                if path.extension().is_some_and(|e| e == "record") {
                    if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                        ids.push(stem.to_string());
                    }
                }
            }
        }
        ids.sort();
        ids.iter().map(|id| self.load(id)).collect()
    }

    pub fn load_log(&self) -> Result<Vec<DecisionEvent>, ReviewError> {
        let path = self.log_path();
        match fs::read_to_string(&path) {
            Ok(text) => Ok(decode_lines(&text, &path)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(ReviewError::Io { path, source: e }),
        }
    }

    pub fn append_event(&self, event: &DecisionEvent) -> Result<(), ReviewError> {
        let path = self.log_path();
        fs::create_dir_all(&self.dir).map_err(Self::io(&self.dir))?;
        let line = encode_record(event).map_err(Self::io(&path))?;
        let mut file = OpenOptions::new().create(true).append(true).open(&path).map_err(Self::io(&path))?;
        file.write_all(format!("{line}\n").as_bytes()).map_err(Self::io(&path))?;
        file.sync_data().map_err(Self::io(&path))
    }
}

struct State {
    bundles: BTreeMap<String, SuggestionBundle>,
    owner: HashMap<String, String>,
}

impl State {
    fn apply(&mut self, event: &DecisionEvent) {
        match self.bundles.get_mut(&event.bundle_id) {
            Some(b) if b.suggestion(&event.suggestion_id).is_some() => {
                b.statuses.insert(event.suggestion_id.clone(), event.status);
                b.review_notes.insert(event.suggestion_id.clone(), event.note.clone());
            }
            _ => warn!(suggestion = event.suggestion_id, "decision log refers to an unknown suggestion; skipped"),
        }
    }
}

type Clock = Box<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// Materialized review state. One lock serializes decisions, which makes
/// the check-then-append per suggestion atomic.
pub struct ReviewService {
    store: BundleStore,
    state: Mutex<State>,
    clock: Clock,
}

impl ReviewService {
    pub fn open(data_dir: &Path) -> Result<Self, ReviewError> {
        Self::with_clock(data_dir, Box::new(Utc::now))
    }

    pub fn with_clock(data_dir: &Path, clock: Clock) -> Result<Self, ReviewError> {
        let store = BundleStore::new(data_dir);
        let mut state = State { bundles: BTreeMap::new(), owner: HashMap::new() };
        for b in store.load_all()? {
            for s in &b.suggestions {
                if let Some(other) = state.owner.get(&s.id) {
                    warn!(suggestion = s.id, bundle = b.id, first = other, "suggestion id appears in two bundles; keeping the first");
                    continue;
                }
                state.owner.insert(s.id.clone(), b.id.clone());
            }
            state.bundles.insert(b.id.clone(), b);
        }
        for event in store.load_log()? {
            state.apply(&event);
        }
        Ok(Self { store, state: Mutex::new(state), clock })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().expect("review state poisoned")
    }

    pub fn bundles(&self) -> Vec<BundleSummary> {
        self.lock()
            .bundles
            .values()
            .map(|b| {
                let mut counts = BTreeMap::new();
                for s in &b.suggestions {
                    *counts.entry(b.status(&s.id)).or_insert(0) += 1;
                }
                BundleSummary {
                    id: b.id.clone(),
                    page_title: b.page_title.clone(),
                    window: b.window.to_string(),
                    total: b.suggestions.len(),
                    counts,
                }
            })
            .collect()
    }

    pub fn bundle(&self, id: &str) -> Result<SuggestionBundle, ReviewError> {
        self.lock().bundles.get(id).cloned().ok_or(ReviewError::NotFound { kind: "bundle", id: id.to_string() })
    }

    fn view(state: &State, suggestion_id: &str) -> Result<SuggestionView, ReviewError> {
        let not_found = || ReviewError::NotFound { kind: "suggestion", id: suggestion_id.to_string() };
        let bundle = state.owner.get(suggestion_id).and_then(|b| state.bundles.get(b)).ok_or_else(not_found)?;
        let s = bundle.suggestion(suggestion_id).ok_or_else(not_found)?;
        Ok(SuggestionView {
            bundle_id: bundle.id.clone(),
            entity: s.page_title.clone(),
            wikipedia_url: wikipedia_url(&s.page_title),
            section_path: s.section_path.to_string(),
            paragraph_before: s.paragraph_before.clone(),
            paragraph_after: s.paragraph_after.clone(),
            source_url: s.citation_url.clone(),
            source_title: s.update.source_title.clone(),
            status: bundle.status(suggestion_id),
            review: bundle.review_notes.get(suggestion_id).cloned(),
            word_diff: word_diff(&s.paragraph_before, &s.paragraph_after),
            token_change: token_change(&s.paragraph_before, &s.paragraph_after),
            suggestion: s.clone(),
        })
    }

    pub fn suggestion(&self, id: &str) -> Result<SuggestionView, ReviewError> {
        Self::view(&self.lock(), id)
    }

    /// Records a decision. Only PENDING suggestions can be decided unless
    /// `overwrite` is set.
    pub fn decide(&self, suggestion_id: &str, req: DecisionRequest, overwrite: bool) -> Result<SuggestionView, ReviewError> {
        let mut state = self.lock();
        let current = Self::view(&state, suggestion_id)?;
        validate(&req)?;
        if current.status != ReviewStatus::Pending && !overwrite {
            return Err(ReviewError::Conflict { id: suggestion_id.to_string(), status: current.status });
        }
        let event = DecisionEvent {
            bundle_id: current.bundle_id,
            suggestion_id: suggestion_id.to_string(),
            status: req.status,
            note: ReviewNote {
                error_categories: req.error_categories.into_iter().collect(),
                revised_text: req.revised_text.filter(|_| req.status == ReviewStatus::AcceptedWithRevision),
                reviewer: req.reviewer.trim().to_string(),
                decided_at: (self.clock)(),
            },
            overwrite,
        };
        self.store.append_event(&event)?;
        state.apply(&event);
        Self::view(&state, suggestion_id)
    }

    /// Suggestions whose status equals `status` (all when `None`), in
    /// bundle then suggestion order.
    pub fn export(&self, status: Option<ReviewStatus>) -> Vec<SuggestionView> {
        let state = self.lock();
        let ids: Vec<String> = state
            .bundles
            .values()
            .flat_map(|b| b.suggestions.iter().filter(|s| state.owner.get(&s.id) == Some(&b.id)).map(|s| s.id.clone()))
            .collect();
        ids.iter()
            .filter_map(|id| Self::view(&state, id).ok())
            .filter(|v| status.is_none_or(|s| v.status == s))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(status: ReviewStatus, text: Option<&str>) -> DecisionRequest {
        DecisionRequest { status, error_categories: vec![], revised_text: text.map(str::to_string), reviewer: "r".into() }
    }

    #[test]
    fn revision_text_iff_accepted_with_revision() {
        assert!(validate(&req(ReviewStatus::AcceptedWithRevision, None)).is_err());
        assert!(validate(&req(ReviewStatus::AcceptedWithRevision, Some("  "))).is_err());
        assert!(validate(&req(ReviewStatus::Accepted, Some("x"))).is_err());
        assert!(validate(&req(ReviewStatus::Pending, None)).is_err());
        assert!(validate(&req(ReviewStatus::AcceptedWithRevision, Some("x"))).is_ok());
        assert!(validate(&req(ReviewStatus::Rejected, None)).is_ok());
    }

    #[test]
    fn category_vocabulary() {
        let mut r = req(ReviewStatus::Rejected, None);
        r.error_categories = vec!["subjective content".into(), "other: tone".into()];
        assert!(validate(&r).is_ok());
        r.error_categories = vec!["bad vibes".into()];
        assert!(validate(&r).is_err());
    }

    #[test]
    fn status_parsing() {
        assert_eq!("accepted_with_revision".parse::<ReviewStatus>().unwrap(), ReviewStatus::AcceptedWithRevision);
        assert!("maybe".parse::<ReviewStatus>().is_err());
    }

    #[test]
    fn wiki_links() {
        assert_eq!(wikipedia_url("Lewis Hamilton"), "https://en.wikipedia.org/wiki/Lewis_Hamilton");
        assert_eq!(wikipedia_url("Café"), "https://en.wikipedia.org/wiki/Caf%C3%A9");
    }
}
