mod support;

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

use chrono::Duration;
use proptest::prelude::*;

use sentinel::agent::{
    replay_decisions, roles, run_aggregation, Action, AgentRoles, AggregationDecision, AggregationState, FetchError,
    FetchedPage, FixturePageFetcher, FixtureSearchClient, PageFetcher, SearchResult,
};
use sentinel::criteria::{CriteriaEntry, SectionCriteria};
use sentinel::llm::{LlmRequest, ScriptedBackend};
use sentinel::revision::EvaluationWindow;
use sentinel::SectionPath;

const ARTICLE: &str = "'''Testville''' is a town.\n\n== Economy ==\nTestville has a market.\n";

fn criteria() -> SectionCriteria {
    SectionCriteria {
        page_title: "Testville".into(),
        revision_id: 1,
        entries: vec![
            CriteriaEntry { section: SectionPath::lead(), criteria: vec!["overview".into()], editable: true },
            CriteriaEntry { section: SectionPath::new(["Economy"]), criteria: vec!["businesses".into()], editable: true },
        ],
    }
}

fn window() -> EvaluationWindow {
    EvaluationWindow::new(support::ts(1, 0), Duration::days(14)).unwrap()
}

fn results(n: usize) -> Vec<SearchResult> {
    (0..n)
        .map(|i| SearchResult {
            url: format!("https://news.example/testville-{i}"),
            title: format!("Testville story {i}"),
            snippet: "Testville news".into(),
            published: None,
        })
        .collect()
}

fn pages(n: usize) -> FixturePageFetcher {
    FixturePageFetcher::new(
        (0..n)
            .map(|i| {
                (
                    format!("https://news.example/testville-{i}"),
                    format!("<html><body><article><p>Testville opened factory number {i} this week.</p></article></body></html>"),
                )
            })
            .collect::<HashMap<_, _>>(),
    )
}

fn proposed_id(prompt: &str) -> u64 {
    let rest = prompt.split("Proposed update [").nth(1).unwrap();
    rest.split(']').next().unwrap().parse().unwrap()
}

/// Navigator always asks the same query; the extractor reports one fact
/// per page; the aggregator follows `script` (`R` replaces the first id).
fn backend(script: Vec<&'static str>) -> Arc<ScriptedBackend> {
    let script = Mutex::new(script.into_iter());
    let first_id = Mutex::new(None::<u64>);
    Arc::new(ScriptedBackend::new("scripted", move |req: &LlmRequest| {
        Ok(if req.system == roles::NAVIGATOR_SYSTEM {
            "Query: Testville news".to_string()
        } else if req.system == roles::EXTRACTOR_SYSTEM {
            let fact = req.prompt.lines().find(|l| l.contains("factory number")).unwrap_or("").trim().to_string();
            format!("Fact: {fact}\nSection: Economy\nRationale: business news")
        } else {
            let id = proposed_id(&req.prompt);
            let first = *first_id.lock().unwrap().get_or_insert(id);
            match script.lock().unwrap().next().unwrap_or("IGNORE") {
                "R" => format!("Decision: REPLACE\nReplaces: {first}\nReason: newer"),
                other => format!("Decision: {other}\nReason: scripted"),
            }
        })
    }))
}

struct CountingFetcher {
    inner: FixturePageFetcher,
    seen: Mutex<Vec<String>>,
}

impl PageFetcher for CountingFetcher {
    fn fetch(&self, url: &str) -> Result<FetchedPage, FetchError> {
        self.seen.lock().unwrap().push(url.to_string());
        self.inner.fetch(url)
    }
}

#[test]
fn scripted_run_reconstructs_accepted_from_log() {
    let b = backend(vec!["ADD", "ADD", "R", "IGNORE"]);
    let snap = support::snapshot("Testville", 1, support::ts(1, 0), ARTICLE);
    let state = run_aggregation(
        &snap,
        &criteria(),
        &window(),
        4,
        &AgentRoles::shared(b.clone()),
        &FixtureSearchClient::new(results(4)),
        &pages(4),
    )
    .unwrap();
    let actions: Vec<Action> = state.decisions.iter().map(|d| d.action).collect();
    assert_eq!(actions, [Action::Add, Action::Add, Action::Replace, Action::Ignore]);
    let accepted: Vec<&str> = state.accepted.iter().map(|c| c.fact_text.as_str()).collect();
    assert_eq!(accepted, ["Testville opened factory number 2 this week.", "Testville opened factory number 1 this week."]);
    assert_eq!(replay_decisions(&state.candidates, &state.decisions).unwrap(), state.accepted);
    assert!(state.accepted.iter().all(|c| c.target_section == SectionPath::new(["Economy"])));
}

#[test]
fn urls_are_visited_once_and_search_runs_dry() {
    let b = backend(vec![]);
    let fetcher = CountingFetcher { inner: pages(3), seen: Mutex::new(Vec::new()) };
    let snap = support::snapshot("Testville", 1, support::ts(1, 0), ARTICLE);
    let state = run_aggregation(
        &snap,
        &criteria(),
        &window(),
        10,
        &AgentRoles::shared(b),
        &FixtureSearchClient::new(results(3)),
        &fetcher,
    )
    .unwrap();
    let seen = fetcher.seen.into_inner().unwrap();
    assert_eq!(seen.len(), 3);
    assert_eq!(seen.iter().collect::<HashSet<_>>().len(), 3);
    assert_eq!(state.visited_urls, seen);
    assert!(state.exhausted);
    assert!(state.iteration < 10);
}

#[test]
fn contract_violations_are_rejected() {
    let mut state = AggregationState::new("Testville", 1, window(), criteria(), 3);
    state.candidates = vec![support::candidate(1, "a", SectionPath::lead()), support::candidate(2, "b", SectionPath::lead())];
    let d = |id, action, replaced_id| AggregationDecision { candidate_id: id, action, replaced_id, reason: String::new() };
    assert!(state.apply(d(1, Action::Replace, None)).is_err());
    assert!(state.apply(d(1, Action::Add, Some(2))).is_err());
    assert!(state.apply(d(9, Action::Add, None)).is_err());
    assert!(state.apply(d(2, Action::Replace, Some(1))).is_err());
    state.apply(d(1, Action::Add, None)).unwrap();
    assert!(state.apply(d(1, Action::Ignore, None)).is_err());
    assert_eq!(state.decisions.len(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn accepted_is_always_the_fold_of_the_log(choices in prop::collection::vec((0u8..3, any::<prop::sample::Index>()), 1..30)) {
        let mut state = AggregationState::new("Testville", 1, window(), criteria(), 30);
        state.candidates = (1..=choices.len() as u64).map(|i| support::candidate(i, &format!("fact {i}"), SectionPath::lead())).collect();
        for (i, (kind, pick)) in choices.iter().enumerate() {
            let id = i as u64 + 1;
            let decision = match (kind, state.accepted.is_empty()) {
                (0, _) => AggregationDecision { candidate_id: id, action: Action::Ignore, replaced_id: None, reason: String::new() },
                (1, _) | (2, true) => AggregationDecision { candidate_id: id, action: Action::Add, replaced_id: None, reason: String::new() },
                _ => AggregationDecision {
                    candidate_id: id,
                    action: Action::Replace,
                    replaced_id: Some(pick.get(&state.accepted).id),
                    reason: String::new(),
                },
            };
            state.apply(decision).unwrap();
            prop_assert_eq!(&replay_decisions(&state.candidates, &state.decisions).unwrap(), &state.accepted);
            let ids: HashSet<u64> = state.accepted.iter().map(|c| c.id).collect();
            prop_assert_eq!(ids.len(), state.accepted.len());
        }
    }
}
