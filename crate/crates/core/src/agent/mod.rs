//! Iterative update discovery: the Navigator picks a search query and a
//! source, the Extractor turns the source into section-targeted candidate
//! facts, and the Aggregator decides to ignore, add or replace each one.

pub mod fetch;
pub mod roles;
pub mod search;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::criteria::SectionCriteria;
use crate::llm::{LlmBackend, LlmError, LlmRequest};
use crate::revision::{ArticleSnapshot, EvaluationWindow, Record};
use crate::text::strip_markup;
use crate::wikitext::{parse_sections, SectionPath, SectionTree};

pub use fetch::{FetchError, FetchedPage, FixturePageFetcher, HttpPageFetcher, PageFetcher};
pub use search::{FixtureSearchClient, GoogleSearchClient, SearchClient, SearchError, SearchResult};

pub const DEFAULT_BUDGET: u32 = 15;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("could not parse {role} response: {raw}")]
    Parse { role: &'static str, raw: String },
    #[error("decision contract violated: {0}")]
    Contract(String),
    #[error("no unvisited search results for query {query:?}")]
    Exhausted { query: String },
    #[error("aggregation budget must be at least 1")]
    ZeroBudget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateCandidate {
    pub id: u64,
    pub fact_text: String,
    /// A criteria key, or [`SectionPath::unmapped`].
    pub target_section: SectionPath,
    pub source_url: String,
    pub source_title: String,
    pub extraction_rationale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    Ignore,
    Add,
    Replace,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Ignore => "IGNORE",
            Action::Add => "ADD",
            Action::Replace => "REPLACE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationDecision {
    pub candidate_id: u64,
    pub action: Action,
    /// Set iff `action` is `Replace`.
    pub replaced_id: Option<u64>,
    pub reason: String,
}

impl Record for AggregationDecision {
    const KIND: &'static str = "aggregation_decision";
}

/// What happened in one loop iteration, for auditing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub query: Option<String>,
    pub url: Option<String>,
    pub candidate_ids: Vec<u64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationState {
    pub page_title: String,
    pub base_revision: u64,
    pub window: EvaluationWindow,
    pub criteria: SectionCriteria,
    pub budget: u32,
    pub iteration: u32,
    pub queries_issued: Vec<String>,
    pub visited_urls: Vec<String>,
    /// Every extracted candidate, decided or not.
    pub candidates: Vec<UpdateCandidate>,
    pub accepted: Vec<UpdateCandidate>,
    pub decisions: Vec<AggregationDecision>,
    pub iterations: Vec<IterationRecord>,
    /// True when the loop stopped because search ran dry.
    pub exhausted: bool,
}

impl Record for AggregationState {
    const KIND: &'static str = "aggregation_state";
}

impl AggregationState {
    pub fn new(page_title: &str, base_revision: u64, window: EvaluationWindow, criteria: SectionCriteria, budget: u32) -> Self {
        Self {
            page_title: page_title.to_string(),
            base_revision,
            window,
            criteria,
            budget,
            iteration: 0,
            queries_issued: Vec::new(),
            visited_urls: Vec::new(),
            candidates: Vec::new(),
            accepted: Vec::new(),
            decisions: Vec::new(),
            iterations: Vec::new(),
            exhausted: false,
        }
    }

    pub fn candidate(&self, id: u64) -> Option<&UpdateCandidate> {
        self.candidates.iter().find(|c| c.id == id)
    }

    pub fn next_candidate_id(&self) -> u64 {
        self.candidates.iter().map(|c| c.id).max().unwrap_or(0) + 1
    }

    pub fn is_visited(&self, url: &str) -> bool {
        self.visited_urls.iter().any(|u| u == url)
    }

    /// Records a decision and updates `accepted`.
    pub fn apply(&mut self, decision: AggregationDecision) -> Result<(), AgentError> {
        apply_to(&mut self.accepted, &self.candidates, &self.decisions, &decision)?;
        self.decisions.push(decision);
        Ok(())
    }
}

fn apply_to(
    accepted: &mut Vec<UpdateCandidate>,
    candidates: &[UpdateCandidate],
    history: &[AggregationDecision],
    d: &AggregationDecision,
) -> Result<(), AgentError> {
    let candidate = candidates
        .iter()
        .find(|c| c.id == d.candidate_id)
        .ok_or_else(|| AgentError::Contract(format!("decision names unknown candidate {}", d.candidate_id)))?;
    if history.iter().any(|h| h.candidate_id == d.candidate_id) {
        return Err(AgentError::Contract(format!("candidate {} already decided", d.candidate_id)));
    }
    match (d.action, d.replaced_id) {
        (Action::Ignore, None) => {}
        (Action::Add, None) => accepted.push(candidate.clone()),
        (Action::Replace, Some(old)) => {
            let pos = accepted.iter().position(|c| c.id == old).ok_or_else(|| {
                AgentError::Contract(format!("REPLACE names {old}, which is not an accepted candidate"))
            })?;
            accepted[pos] = candidate.clone();
        }
        (Action::Replace, None) => return Err(AgentError::Contract("REPLACE without a replaced id".into())),
        (_, Some(_)) => return Err(AgentError::Contract(format!("{} must not name a replaced id", d.action))),
    }
    Ok(())
}

/// Rebuilds the accepted list from the decision log alone.
pub fn replay_decisions(candidates: &[UpdateCandidate], decisions: &[AggregationDecision]) -> Result<Vec<UpdateCandidate>, AgentError> {
    let mut accepted = Vec::new();
    for (i, d) in decisions.iter().enumerate() {
        apply_to(&mut accepted, candidates, &decisions[..i], d)?;
    }
    Ok(accepted)
}

/// Backends per role; by default all three share one model.
#[derive(Clone)]
pub struct AgentRoles {
    pub navigator: Arc<dyn LlmBackend>,
    pub extractor: Arc<dyn LlmBackend>,
    pub aggregator: Arc<dyn LlmBackend>,
}

impl AgentRoles {
    pub fn shared(backend: Arc<dyn LlmBackend>) -> Self {
        Self { navigator: backend.clone(), extractor: backend.clone(), aggregator: backend }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Navigation {
    pub query: String,
    pub chosen: SearchResult,
}

fn ensure_title(query: String, title: &str) -> String {
    if query.to_lowercase().contains(&title.to_lowercase()) {
        query
    } else {
        format!("{title} {query}")
    }
}

fn same_query(a: &str, b: &str) -> bool {
    let norm = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    norm(a) == norm(b)
}

/// A query that differs from `previous`, built from the editable sections
/// in rotation.
fn fallback_query(state: &AggregationState, previous: &str) -> String {
    let sections: Vec<&str> = state
        .criteria
        .entries
        .iter()
        .filter(|e| e.editable)
        .filter_map(|e| e.section.last())
        .collect();
    let base = if sections.is_empty() {
        format!("{} news", state.page_title)
    } else {
        format!("{} {}", state.page_title, sections[state.iteration as usize % sections.len()])
    };
    if same_query(&base, previous) {
        format!("{base} latest")
    } else {
        base
    }
}

/// Proposes a query and picks the top-ranked unvisited in-window result.
/// The query is recorded even when no result is left.
pub fn navigate(state: &mut AggregationState, backend: &dyn LlmBackend, search: &dyn SearchClient) -> Result<Navigation, AgentError> {
    let ask = |note: Option<&str>| -> Result<String, AgentError> {
        let raw = backend.invoke(&LlmRequest::new(roles::NAVIGATOR_SYSTEM, roles::navigator_prompt(state, note), 0.0))?;
        roles::parse_query(&raw).ok_or(AgentError::Parse { role: "navigator", raw })
    };
    let mut query = ensure_title(ask(None)?, &state.page_title);
    let refine = state.decisions.last().is_some_and(|d| d.action == Action::Ignore);
    if let (true, Some(prev)) = (refine, state.queries_issued.last()) {
        if same_query(&query, prev) {
            let note = format!("The query \"{prev}\" was already issued and its result was ignored. Write a different query.");
            query = ensure_title(ask(Some(&note))?, &state.page_title);
            if same_query(&query, prev) {
                query = fallback_query(state, prev);
            }
        }
    }
    state.queries_issued.push(query.clone());
    let results = search::within_window(search.search(&query, &state.window)?, &state.window);
    match results.into_iter().find(|r| !state.is_visited(&r.url)) {
        Some(chosen) => Ok(Navigation { query, chosen }),
        None => Err(AgentError::Exhausted { query }),
    }
}

/// Extracts at most five candidates from a fetched page, numbering them
/// from `first_id`.
pub fn extract(
    page: &FetchedPage,
    criteria: &SectionCriteria,
    page_title: &str,
    first_id: u64,
    backend: &dyn LlmBackend,
) -> Result<Vec<UpdateCandidate>, AgentError> {
    if page.text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let prompt = roles::extractor_prompt(criteria, page_title, &page.title, &page.url, &page.text);
    let raw = backend.invoke(&LlmRequest::new(roles::EXTRACTOR_SYSTEM, prompt, 0.0))?;
    let facts = roles::parse_extraction(&raw, criteria).ok_or(AgentError::Parse { role: "extractor", raw })?;
    Ok(facts
        .into_iter()
        .enumerate()
        .map(|(i, f)| UpdateCandidate {
            id: first_id + i as u64,
            fact_text: f.fact_text,
            target_section: f.target_section,
            source_url: page.url.clone(),
            source_title: page.title.clone(),
            extraction_rationale: f.rationale,
        })
        .collect())
}

/// Asks the Aggregator about a candidate already registered in `state` and
/// applies the decision.
pub fn aggregate(
    state: &mut AggregationState,
    candidate_id: u64,
    section_text: &str,
    backend: &dyn LlmBackend,
) -> Result<AggregationDecision, AgentError> {
    let candidate = state
        .candidate(candidate_id)
        .cloned()
        .ok_or_else(|| AgentError::Contract(format!("unknown candidate {candidate_id}")))?;
    let prompt = roles::aggregator_prompt(state, &candidate, section_text);
    let raw = backend.invoke(&LlmRequest::new(roles::AGGREGATOR_SYSTEM, prompt, 0.0))?;
    let parsed = roles::parse_decision(&raw).ok_or(AgentError::Parse { role: "aggregator", raw })?;
    let decision = AggregationDecision {
        candidate_id,
        action: parsed.action,
        replaced_id: parsed.replaced_id,
        reason: parsed.reason,
    };
    state.apply(decision.clone())?;
    Ok(decision)
}

/// Plain text of a section as shown to the Aggregator.
pub fn section_text(tree: &SectionTree, path: &SectionPath) -> String {
    tree.find(path).map(|n| strip_markup(&n.text).trim().to_string()).unwrap_or_default()
}

/// Runs the loop until the budget is spent or search is exhausted.
/// Component failures end the current iteration only.
pub fn run_aggregation(
    snapshot: &ArticleSnapshot,
    criteria: &SectionCriteria,
    window: &EvaluationWindow,
    budget: u32,
    roles: &AgentRoles,
    search: &dyn SearchClient,
    fetcher: &dyn PageFetcher,
) -> Result<AggregationState, AgentError> {
    if budget == 0 {
        return Err(AgentError::ZeroBudget);
    }
    let tree = parse_sections(&snapshot.wikitext);
    let mut state = AggregationState::new(&snapshot.page_title, snapshot.revision.revision_id, *window, criteria.clone(), budget);
    while state.iteration < state.budget {
        state.iteration += 1;
        let mut record = IterationRecord { iteration: state.iteration, query: None, url: None, candidate_ids: Vec::new(), error: None };
        let outcome = run_iteration(&mut state, &mut record, &tree, roles, search, fetcher);
        let stop = matches!(outcome, Err(AgentError::Exhausted { .. }));
        if let Err(e) = outcome {
            if stop {
                info!(page = state.page_title, iteration = state.iteration, "search exhausted");
            } else {
                warn!(page = state.page_title, iteration = state.iteration, error = %e, "aggregation iteration failed");
            }
            record.error = Some(e.to_string());
        }
        state.iterations.push(record);
        if stop {
            state.exhausted = true;
            break;
        }
    }
    Ok(state)
}

fn run_iteration(
    state: &mut AggregationState,
    record: &mut IterationRecord,
    tree: &SectionTree,
    roles: &AgentRoles,
    search: &dyn SearchClient,
    fetcher: &dyn PageFetcher,
) -> Result<(), AgentError> {
    let nav = navigate(state, roles.navigator.as_ref(), search);
    record.query = state.queries_issued.last().cloned();
    let nav = nav?;
    record.url = Some(nav.chosen.url.clone());
    state.visited_urls.push(nav.chosen.url.clone());
    let mut page = fetcher.fetch(&nav.chosen.url)?;
    if page.title.is_empty() {
        page.title = nav.chosen.title.clone();
    }
    let found = extract(&page, &state.criteria, &state.page_title, state.next_candidate_id(), roles.extractor.as_ref())?;
    for candidate in found {
        let id = candidate.id;
        let text = section_text(tree, &candidate.target_section);
        state.candidates.push(candidate);
        record.candidate_ids.push(id);
        aggregate(state, id, &text, roles.aggregator.as_ref())?;
    }
    Ok(())
}
