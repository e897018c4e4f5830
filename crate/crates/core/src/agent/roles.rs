//! Prompt templates and response parsers for the three agent roles.

use super::{Action, AggregationState, UpdateCandidate};
use crate::criteria::SectionCriteria;
use crate::llm::strip_code_fence;
use crate::wikitext::SectionPath;

pub const MAX_CANDIDATES_PER_PAGE: usize = 5;
const RECENT_DECISIONS: usize = 8;

pub const NAVIGATOR_SYSTEM: &str = "You are the Navigator of a team that keeps a Wikipedia article up to date. \
You write web search queries that surface recent news about the article subject.";

pub const EXTRACTOR_SYSTEM: &str = "You are the Extractor of a team that keeps a Wikipedia article up to date. \
You read news articles and pull out new, objective facts that belong in the Wikipedia article.";

pub const AGGREGATOR_SYSTEM: &str = "You are the Aggregator of a team that keeps a Wikipedia article up to date. \
You decide whether a proposed fact is worth adding to a section, given what the section and the accepted updates already say.";

fn accepted_block(state: &AggregationState) -> String {
    if state.accepted.is_empty() {
        return "(none yet)".to_string();
    }
    state
        .accepted
        .iter()
        .map(|c| format!("[{}] ({}) {}", c.id, c.target_section, c.fact_text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn feedback_block(state: &AggregationState) -> String {
    let start = state.decisions.len().saturating_sub(RECENT_DECISIONS);
    let lines: Vec<String> = state.decisions[start..]
        .iter()
        .map(|d| {
            let fact = state.candidate(d.candidate_id).map(|c| c.fact_text.as_str()).unwrap_or("?");
            format!("{} [{}] {} -- {}", d.action, d.candidate_id, fact, d.reason)
        })
        .collect();
    if lines.is_empty() {
        "(no decisions yet)".to_string()
    } else {
        lines.join("\n")
    }
}

pub fn navigator_prompt(state: &AggregationState, retry_note: Option<&str>) -> String {
    let previous = if state.queries_issued.is_empty() {
        "(none)".to_string()
    } else {
        state.queries_issued.iter().map(|q| format!("- {q}")).collect::<Vec<_>>().join("\n")
    };
    let mut p = format!(
        "Article: {title}\nNews published between {from} and {to} is in scope.\n\n\
Section criteria:\n{criteria}\n\n\
Updates accepted so far:\n{accepted}\n\n\
Recent aggregator decisions (action [candidate] fact -- reason):\n{feedback}\n\n\
Queries already issued:\n{previous}\n\n\
Write the next web search query. It must contain the article title \"{title}\". \
If recent candidates were ignored as duplicates or insignificant, refine the query towards information \
that is still missing from the sections above.\n\nAnswer with a single line:\nQuery: <search query>",
        title = state.page_title,
        from = state.window.start().format("%Y-%m-%d"),
        to = state.window.end().format("%Y-%m-%d"),
        criteria = state.criteria.render(),
        accepted = accepted_block(state),
        feedback = feedback_block(state),
    );
    if let Some(note) = retry_note {
        p.push_str("\n\n");
        p.push_str(note);
    }
    p
}

/// The query from a Navigator response: the `Query:` line if present,
/// otherwise the first non-empty line.
pub fn parse_query(response: &str) -> Option<String> {
    let body = strip_code_fence(response);
    let line = body
        .lines()
        .find_map(|l| {
            let t = l.trim();
            let lower = t.to_ascii_lowercase();
            lower.starts_with("query:").then(|| t["query:".len()..].trim())
        })
        .or_else(|| body.lines().map(str::trim).find(|l| !l.is_empty()))?;
    let q = line.trim_matches(|c: char| c == '"' || c == '`' || c == '*').trim();
    (!q.is_empty()).then(|| q.to_string())
}

pub fn extractor_prompt(criteria: &SectionCriteria, page_title: &str, source_title: &str, source_url: &str, content: &str) -> String {
    format!(
        "Wikipedia article: {page_title}\n\nSection criteria:\n{criteria}\n\n\
News source: {source_title}\nURL: {source_url}\n\nContent:\n{content}\n\n\
List at most {max} new facts from the news content that belong in the article. Each fact must be a single \
self-contained declarative sentence that names the subject, states only objective information and leaves out \
opinions or commentary. Assign each fact to the section whose criteria it satisfies, using the section path exactly \
as written above; write (unmapped) if no section fits.\n\n\
Use this format for every fact:\n\
Fact: <statement>\nSection: <section path>\nRationale: <why it fits that section>\n\n\
If the content has no relevant facts, answer NONE.",
        criteria = criteria.render(),
        max = MAX_CANDIDATES_PER_PAGE,
    )
}

/// A parsed Extractor block, before ids are assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedFact {
    pub fact_text: String,
    pub target_section: SectionPath,
    pub rationale: String,
}

fn field<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let t = line.trim().trim_start_matches(['-', '*']).trim();
    let t = t.trim_start_matches("**");
    let (head, rest) = t.split_once(':')?;
    head.trim().trim_end_matches("**").eq_ignore_ascii_case(name).then(|| rest.trim().trim_start_matches("**").trim())
}

/// Parses `Fact:` / `Section:` / `Rationale:` blocks. `None` means the
/// response is neither a block list nor `NONE`.
pub fn parse_extraction(response: &str, criteria: &SectionCriteria) -> Option<Vec<ExtractedFact>> {
    let body = strip_code_fence(response);
    let mut out: Vec<ExtractedFact> = Vec::new();
    let mut saw_fact = false;
    for line in body.lines() {
        if let Some(fact) = field(line, "fact") {
            saw_fact = true;
            out.push(ExtractedFact { fact_text: fact.to_string(), target_section: SectionPath::unmapped(), rationale: String::new() });
        } else if let (Some(section), Some(last)) = (field(line, "section"), out.last_mut()) {
            last.target_section = criteria.resolve(section).filter(|p| criteria.contains(p)).unwrap_or_else(SectionPath::unmapped);
        } else if let (Some(r), Some(last)) = (field(line, "rationale"), out.last_mut()) {
            last.rationale = r.to_string();
        }
    }
    if !saw_fact {
        let t = body.trim().trim_end_matches('.').to_ascii_uppercase();
        return (t == "NONE" || t.is_empty()).then(Vec::new);
    }
    out.retain(|f| !f.fact_text.is_empty());
    out.truncate(MAX_CANDIDATES_PER_PAGE);
    Some(out)
}

pub fn aggregator_prompt(state: &AggregationState, candidate: &UpdateCandidate, section_text: &str) -> String {
    let criteria = state
        .criteria
        .get(&candidate.target_section)
        .map(|e| e.criteria.iter().map(|c| format!("- {c}")).collect::<Vec<_>>().join("\n"))
        .unwrap_or_else(|| "(no criteria: the fact was not mapped to a section)".to_string());
    let section_text = if section_text.trim().is_empty() { "(empty)" } else { section_text.trim() };
    format!(
        "Article: {title}\nSection: {section}\n\nSection criteria:\n{criteria}\n\n\
Current section content:\n{section_text}\n\n\
Updates accepted so far:\n{accepted}\n\n\
Proposed update [{id}] from {url}:\n{fact}\n\n\
Decide what to do with the proposed update:\n\
- IGNORE if it is insignificant, already stated in the section, or duplicates an accepted update\n\
- ADD if it is new and worth including in this section\n\
- REPLACE if it is a newer or more complete version of an accepted update; name that update's id\n\n\
Answer in this format:\nDecision: <IGNORE|ADD|REPLACE>\nReplaces: <id, only for REPLACE>\nReason: <one sentence>",
        title = state.page_title,
        section = candidate.target_section,
        accepted = accepted_block(state),
        id = candidate.id,
        url = candidate.source_url,
        fact = candidate.fact_text,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDecision {
    pub action: Action,
    pub replaced_id: Option<u64>,
    pub reason: String,
}

pub fn parse_decision(response: &str) -> Option<ParsedDecision> {
    let body = strip_code_fence(response);
    let mut action = None;
    let mut replaced_id = None;
    let mut reason = String::new();
    for line in body.lines() {
        if let Some(d) = field(line, "decision") {
            let word = d.split(|c: char| !c.is_ascii_alphabetic()).find(|w| !w.is_empty()).unwrap_or_default();
            action = match word.to_ascii_uppercase().as_str() {
                "IGNORE" => Some(Action::Ignore),
                "ADD" => Some(Action::Add),
                "REPLACE" => Some(Action::Replace),
                _ => None,
            };
        } else if let Some(r) = field(line, "replaces") {
            replaced_id = r.trim_start_matches(['[', '#']).split(|c: char| !c.is_ascii_digit()).next().and_then(|n| n.parse().ok());
        } else if let Some(r) = field(line, "reason") {
            reason = r.to_string();
        }
    }
    let action = action?;
    if action != Action::Replace {
        replaced_id = None;
    }
    if reason.is_empty() {
        reason = "no reason given".to_string();
    }
    Some(ParsedDecision { action, replaced_id, reason })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::CriteriaEntry;

    fn criteria() -> SectionCriteria {
        let entry = |p: SectionPath| CriteriaEntry { section: p, criteria: vec!["x".into()], editable: true };
        SectionCriteria {
            page_title: "Lewis Hamilton".into(),
            revision_id: 1,
            entries: vec![entry(SectionPath::lead()), entry(SectionPath::new(["Formula One career", "Ferrari 2025"]))],
        }
    }

    #[test]
    fn queries() {
        assert_eq!(parse_query("Query: \"Lewis Hamilton Ferrari\"").as_deref(), Some("Lewis Hamilton Ferrari"));
        assert_eq!(parse_query("\nLewis Hamilton news\nmore").as_deref(), Some("Lewis Hamilton news"));
        assert_eq!(parse_query("  "), None);
    }

    #[test]
    fn extraction_blocks() {
        let resp = "Here you go.\nFact: Hamilton will drive for Ferrari in 2025.\nSection: Ferrari 2025\nRationale: team move\n\n\
Fact: **Hamilton** praised the fans.\nSection: Personal opinions\nRationale: none\n";
        let got = parse_extraction(resp, &criteria()).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].target_section, SectionPath::new(["Formula One career", "Ferrari 2025"]));
        assert_eq!(got[0].rationale, "team move");
        assert_eq!(got[1].target_section, SectionPath::unmapped());
        assert_eq!(parse_extraction("NONE", &criteria()), Some(vec![]));
        assert_eq!(parse_extraction("I'm not sure", &criteria()), None);
        let many: String = (0..8).map(|i| format!("Fact: f{i}\nSection: (lead)\n")).collect();
        assert_eq!(parse_extraction(&many, &criteria()).unwrap().len(), MAX_CANDIDATES_PER_PAGE);
    }

    #[test]
    fn decisions() {
        let d = parse_decision("Decision: REPLACE\nReplaces: [3]\nReason: newer figure").unwrap();
        assert_eq!((d.action, d.replaced_id, d.reason.as_str()), (Action::Replace, Some(3), "newer figure"));
        let d = parse_decision("**Decision:** ADD\nReplaces: 4\nReason: new").unwrap();
        assert_eq!((d.action, d.replaced_id), (Action::Add, None));
        assert_eq!(parse_decision("Decision: maybe"), None);
    }
}
