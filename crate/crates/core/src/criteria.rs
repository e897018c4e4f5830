//! Per-section content-inclusion criteria, induced once per article
//! revision and used as the placement policy during aggregation.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::llm::{strip_code_fence, LlmBackend, LlmError, LlmRequest};
use crate::revision::{ArticleSnapshot, ArtifactKey, Record, Store, StoreError};
use crate::text::strip_markup;
use crate::wikitext::{parse_sections, SectionPath, SectionTree};

pub const FALLBACK_CRITERION: &str = "facts consistent with existing section content";

pub const CRITERIA_SYSTEM: &str = "You are an experienced Wikipedia editor who documents how articles are organised.";

const INSTRUCTION: &str = "Below is a Wikipedia article. Each section starts with a line of the form `### <section path>`, \
where nested sections are written as `Parent > Child` and the introduction is `### (lead)`.

For every section, write the content inclusion criteria: short declarative rules describing which kinds of \
facts belong in that section and nowhere else. Use the section content itself to infer its scope.

Answer with one block per section, in the same order, using exactly this format and the same section paths:

### <section path>
- <criterion>
- <criterion>";

#[derive(Debug, Error)]
pub enum CriteriaError {
    #[error("article {0:?} has no sections to describe")]
    EmptyArticle(String),
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("could not parse criteria response: {message}")]
    Parse { message: String, raw: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaEntry {
    pub section: SectionPath,
    pub criteria: Vec<String>,
    /// False for sections without running prose (tables, lists, infobox
    /// only); such sections never receive edits.
    pub editable: bool,
}

/// Criteria keyed by section path, in document order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionCriteria {
    pub page_title: String,
    pub revision_id: u64,
    pub entries: Vec<CriteriaEntry>,
}

impl Record for SectionCriteria {
    const KIND: &'static str = "section_criteria";
}

impl SectionCriteria {
    pub fn get(&self, path: &SectionPath) -> Option<&CriteriaEntry> {
        self.entries.iter().find(|e| &e.section == path)
    }

    pub fn contains(&self, path: &SectionPath) -> bool {
        self.get(path).is_some()
    }

    pub fn keys(&self) -> impl Iterator<Item = &SectionPath> {
        self.entries.iter().map(|e| &e.section)
    }

    pub fn is_editable(&self, path: &SectionPath) -> bool {
        self.get(path).is_some_and(|e| e.editable)
    }

    /// Resolves a section name as written by a model: an exact path, a path
    /// differing in case/spacing, or a unique innermost heading.
    pub fn resolve(&self, name: &str) -> Option<SectionPath> {
        resolve_heading(self.keys(), name)
    }

    /// Plain-text rendering used inside agent prompts.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("### {}\n", e.section));
            for c in &e.criteria {
                out.push_str(&format!("- {c}\n"));
            }
            out.push('\n');
        }
        out.trim_end().to_string()
    }
}

/// Sections that receive criteria: every section, except an empty lead when
/// the article has headed sections.
pub fn criteria_sections(tree: &SectionTree) -> Vec<&SectionPath> {
    tree.nodes
        .iter()
        .filter(|n| !(n.path.is_lead() && tree.nodes.len() > 1 && n.text.trim().is_empty()))
        .map(|n| &n.path)
        .collect()
}

pub fn build_prompt(title: &str, tree: &SectionTree) -> String {
    let keys = criteria_sections(tree);
    let mut article = String::new();
    for node in tree.nodes.iter().filter(|n| keys.contains(&&n.path)) {
        article.push_str(&format!("### {}\n", node.path));
        let body = strip_markup(&node.text);
        let body = body.trim();
        if !body.is_empty() {
            article.push_str(body);
            article.push('\n');
        }
        article.push('\n');
    }
    format!("{INSTRUCTION}\n\nArticle title: {title}\n\n{}", article.trim_end())
}

fn normalize_heading(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| c == '*' || c == '`' || c == ':' || c == '"')
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn resolve_heading<'a>(keys: impl Iterator<Item = &'a SectionPath>, name: &str) -> Option<SectionPath> {
    let wanted = normalize_heading(name);
    if matches!(wanted.as_str(), "(lead)" | "lead" | "introduction" | "intro") {
        return Some(SectionPath::lead());
    }
    let wanted_path = SectionPath::parse(&wanted).to_string();
    let keys: Vec<&SectionPath> = keys.collect();
    if let Some(k) = keys.iter().find(|k| normalize_heading(&k.to_string()) == wanted_path) {
        return Some((*k).clone());
    }
    let last = SectionPath::parse(&wanted).last().map(str::to_string)?;
    let mut by_last = keys.iter().filter(|k| k.last().map(normalize_heading).as_deref() == Some(last.as_str()));
    match (by_last.next(), by_last.next()) {
        (Some(k), None) => Some((*k).clone()),
        _ => None,
    }
}

fn bullet(line: &str) -> Option<&str> {
    let t = line.trim_start();
    for prefix in ["- ", "* ", "• "] {
        if let Some(rest) = t.strip_prefix(prefix) {
            return Some(rest.trim());
        }
    }
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(rest) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return Some(rest.trim());
        }
    }
    None
}

/// Parses `### path` blocks of bullets. Text between blocks is ignored.
/// Returns `(heading as written, criteria)` in response order.
pub fn parse_blocks(response: &str) -> Vec<(String, Vec<String>)> {
    let mut blocks: Vec<(String, Vec<String>)> = Vec::new();
    for line in strip_code_fence(response).lines() {
        let t = line.trim();
        if t.starts_with("```") {
            continue;
        }
        if t.starts_with("##") {
            let heading = t.trim_start_matches('#').trim();
            if !heading.is_empty() {
                blocks.push((heading.to_string(), Vec::new()));
            }
            continue;
        }
        if let (Some(item), Some((_, list))) = (bullet(t), blocks.last_mut()) {
            if !item.is_empty() {
                list.push(item.to_string());
            }
        }
    }
    blocks
}

/// Maps a model response onto the article's sections. Unknown headings are
/// dropped; sections the model skipped get [`FALLBACK_CRITERION`].
pub fn parse_response(
    page_title: &str,
    revision_id: u64,
    tree: &SectionTree,
    response: &str,
) -> Result<SectionCriteria, CriteriaError> {
    let blocks = parse_blocks(response);
    if blocks.is_empty() {
        return Err(CriteriaError::Parse {
            message: "no `### <section>` blocks found".into(),
            raw: response.to_string(),
        });
    }
    let keys = criteria_sections(tree);
    let mut found: HashMap<SectionPath, Vec<String>> = HashMap::new();
    for (heading, criteria) in blocks {
        match resolve_heading(keys.iter().copied(), &heading) {
            Some(path) if keys.contains(&&path) => found.entry(path).or_default().extend(criteria),
            _ => warn!(page = page_title, heading, "criteria block names an unknown section"),
        }
    }
    let entries = keys
        .into_iter()
        .map(|path| {
            let node = tree.find(path).expect("key comes from tree");
            let mut criteria = found.remove(path).unwrap_or_default();
            criteria.dedup();
            if criteria.is_empty() {
                criteria.push(FALLBACK_CRITERION.to_string());
            }
            CriteriaEntry { section: path.clone(), criteria, editable: node.has_prose() }
        })
        .collect();
    Ok(SectionCriteria { page_title: page_title.to_string(), revision_id, entries })
}

/// One uncached induction call.
pub fn induce_criteria(snapshot: &ArticleSnapshot, backend: &dyn LlmBackend) -> Result<SectionCriteria, CriteriaError> {
    let tree = parse_sections(&snapshot.wikitext);
    if criteria_sections(&tree).is_empty() {
        return Err(CriteriaError::EmptyArticle(snapshot.page_title.clone()));
    }
    let prompt = build_prompt(&snapshot.page_title, &tree);
    let response = backend.invoke(&LlmRequest::new(CRITERIA_SYSTEM, prompt, 0.0))?;
    parse_response(&snapshot.page_title, snapshot.revision.revision_id, &tree, &response)
}

/// Induction with per-(page, revision) persistence. Concurrent calls for one
/// page are serialized so the backend is asked once.
pub struct CriteriaInducer {
    backend: Arc<dyn LlmBackend>,
    store: Arc<Store>,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl CriteriaInducer {
    pub fn new(backend: Arc<dyn LlmBackend>, store: Arc<Store>) -> Self {
        Self { backend, store, locks: Mutex::new(HashMap::new()) }
    }

    pub fn key(snapshot: &ArticleSnapshot) -> ArtifactKey {
        ArtifactKey::new(&snapshot.page_title, "criteria", snapshot.revision.revision_id.to_string())
    }

    pub fn induce(&self, snapshot: &ArticleSnapshot) -> Result<SectionCriteria, CriteriaError> {
        let lock = self.locks.lock().expect("criteria locks poisoned").entry(snapshot.page_title.clone()).or_default().clone();
        let _guard = lock.lock().expect("criteria page lock poisoned");
        let key = Self::key(snapshot);
        match self.store.get::<SectionCriteria>(&key) {
            Ok(cached) => {
                debug!(page = snapshot.page_title, revision = snapshot.revision.revision_id, "criteria cache hit");
                return Ok(cached);
            }
            Err(StoreError::MissingKey(_)) => {}
            Err(e) => return Err(e.into()),
        }
        let criteria = induce_criteria(snapshot, self.backend.as_ref())?;
        self.store.put(&key, &criteria)?;
        Ok(criteria)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ARTICLE: &str = "Intro text about a driver.\n\n== Early life ==\nBorn in 1985.\n\n== Career ==\n=== Ferrari 2025 ===\nHe signed.\n\n== Statistics ==\n{| class=\"wikitable\"\n| a\n|}\n";

    #[test]
    fn parses_and_falls_back() {
        let tree = parse_sections(ARTICLE);
        let resp = "Sure!\n\n### (lead)\n- summary facts\n\n### early life\n- childhood\n- education\nnote: ok\n### Ferrari 2025\n1. contract news\n### Nonexistent\n- x\n";
        let c = parse_response("P", 7, &tree, resp).unwrap();
        let keys: Vec<String> = c.keys().map(ToString::to_string).collect();
        assert_eq!(keys, ["(lead)", "Early life", "Career", "Career > Ferrari 2025", "Statistics"]);
        assert_eq!(c.get(&SectionPath::new(["Early life"])).unwrap().criteria, ["childhood", "education"]);
        assert_eq!(c.get(&SectionPath::new(["Career"])).unwrap().criteria, [FALLBACK_CRITERION]);
        assert_eq!(c.get(&SectionPath::new(["Career", "Ferrari 2025"])).unwrap().criteria, ["contract news"]);
        assert!(!c.is_editable(&SectionPath::new(["Statistics"])));
        assert!(c.is_editable(&SectionPath::lead()));
    }

    #[test]
    fn no_blocks_is_parse_error() {
        let tree = parse_sections(ARTICLE);
        match parse_response("P", 1, &tree, "I cannot help with that.") {
            Err(CriteriaError::Parse { raw, .. }) => assert_eq!(raw, "I cannot help with that."),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn prompt_marks_sections() {
        let p = build_prompt("P", &parse_sections(ARTICLE));
        assert!(p.contains("### (lead)\nIntro text"));
        assert!(p.contains("### Career > Ferrari 2025\nHe signed."));
    }

    #[test]
    fn empty_lead_is_skipped_when_sections_exist() {
        let tree = parse_sections("== Only ==\nText.\n");
        let keys: Vec<String> = criteria_sections(&tree).iter().map(ToString::to_string).collect();
        assert_eq!(keys, ["Only"]);
    }
}
