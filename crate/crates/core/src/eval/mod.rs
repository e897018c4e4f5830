//! Evaluation: atomic-fact decomposition of human edits, entailment
//! judges, coverage of human edits by agent edits, and editor metrics.

mod coverage;
mod editor_metrics;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{strip_code_fence, LlmBackend, LlmError, LlmRequest};
use crate::mining::FactualEdit;
use crate::prompts;
use crate::revision::Record;
use crate::text::{normalized_tokens, strip_markup};

pub use coverage::{
    coverage, coverage_with_facts, entail, render_detail, score_edit, summary_table, CoverageCounts, CoverageReport,
    EditCoverage, HumanEditFacts,
};
pub use editor_metrics::{
    commentary_coverage, evaluate_editor, key_facts_coverage, EditorMetrics, EditorReport,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("edit {0} decomposed into no atomic facts")]
    EmptyDecomposition(String),
    #[error("judge answered {got} judgments for {expected} elements: {raw}")]
    JudgeMismatch { expected: usize, got: usize, raw: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicFact {
    pub text: String,
    pub parent_edit_id: String,
    pub index: usize,
}

impl Record for AtomicFact {
    const KIND: &'static str = "atomic_fact";
}

pub const DECOMPOSE_SYSTEM: &str = "You analyse Wikipedia edits and break them into atomic facts.";

fn decompose_prompt(edit: &FactualEdit) -> String {
    let r = &edit.record;
    let inserted: Vec<String> = r.insertions.iter().map(|s| format!("- {}", strip_markup(&s.text).trim())).collect();
    let removed: Vec<String> = r.removals.iter().map(|s| format!("- {}", strip_markup(&s.text).trim())).collect();
    format!(
        "Article: {title}\nSection: {section}\n\nParagraph before the edit:\n{before}\n\nParagraph after the edit:\n{after}\n\n\
Inserted sentences:\n{ins}\n\nRemoved sentences:\n{rem}\n\n\
List the atomic facts that this edit introduced or modified. An atomic fact is a minimal, verifiable piece of information \
stated as one short self-contained sentence that names its subject instead of using pronouns. Do not list facts that \
were already present before the edit. Answer with one fact per line, each starting with \"- \".",
        title = r.page_title,
        section = r.section_path,
        before = strip_markup(&r.paragraph_before).trim(),
        after = strip_markup(&r.paragraph_after).trim(),
        ins = if inserted.is_empty() { "(none)".to_string() } else { inserted.join("\n") },
        rem = if removed.is_empty() { "(none)".to_string() } else { removed.join("\n") },
    )
}

fn bullet(line: &str) -> Option<&str> {
    let t = line.trim();
    for prefix in ["- ", "* ", "• "] {
        if let Some(rest) = t.strip_prefix(prefix) {
            return Some(rest.trim());
        }
    }
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    t[digits..].strip_prefix(". ").or_else(|| t[digits..].strip_prefix(") ")).map(str::trim)
}

/// Bulleted lines of a response; plain non-empty lines when there are no
/// bullets at all.
pub fn parse_fact_list(response: &str) -> Vec<String> {
    let body = strip_code_fence(response);
    let bullets: Vec<String> = body.lines().filter_map(bullet).filter(|s| !s.is_empty()).map(str::to_string).collect();
    if !bullets.is_empty() {
        return bullets;
    }
    body.lines().map(str::trim).filter(|l| !l.is_empty() && !l.ends_with(':')).map(str::to_string).collect()
}

/// Splits a human edit into atomic facts.
pub fn decompose(edit: &FactualEdit, backend: &dyn LlmBackend) -> Result<Vec<AtomicFact>, EvalError> {
    let raw = backend.invoke(&LlmRequest::new(DECOMPOSE_SYSTEM, decompose_prompt(edit), 0.0))?;
    let id = edit.id();
    let facts: Vec<AtomicFact> = parse_fact_list(&raw)
        .into_iter()
        .enumerate()
        .map(|(index, text)| AtomicFact { text, parent_edit_id: id.clone(), index })
        .collect();
    if facts.is_empty() {
        return Err(EvalError::EmptyDecomposition(id));
    }
    Ok(facts)
}

/// Binary judgment of whether a text states a fact.
pub trait EntailmentJudge: Send + Sync {
    fn entails(&self, fact: &str, text: &str) -> Result<bool, EvalError>;

    /// Judgments for several facts against one text, in order.
    fn entails_batch(&self, facts: &[&str], text: &str) -> Result<Vec<bool>, EvalError> {
        facts.iter().map(|f| self.entails(f, text)).collect()
    }
}

/// Deterministic judge: the fact's normalized tokens must occur as a
/// contiguous run in the text's normalized tokens (markup stripped).
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalizedMatchJudge;

impl EntailmentJudge for NormalizedMatchJudge {
    fn entails(&self, fact: &str, text: &str) -> Result<bool, EvalError> {
        let needle = normalized_tokens(&strip_markup(fact));
        if needle.is_empty() {
            return Ok(false);
        }
        let hay = normalized_tokens(&strip_markup(text));
        Ok(hay.windows(needle.len()).any(|w| w == needle.as_slice()))
    }
}

/// Judge using the element/thought/judgment prompt; one call per batch.
pub struct LlmJudge<B> {
    backend: B,
}

impl<B: LlmBackend> LlmJudge<B> {
    pub fn new(backend: B) -> Self {
        Self { backend }
    }
}

/// The Yes/No judgments of an element-by-element answer, in order.
pub fn parse_judgments(response: &str) -> Vec<bool> {
    response
        .lines()
        .filter_map(|l| {
            let t = l.trim().trim_start_matches(['-', '*']).trim().trim_start_matches("**");
            let (head, rest) = t.split_once(':')?;
            if !head.trim().trim_end_matches("**").eq_ignore_ascii_case("judgment") {
                return None;
            }
            let v = rest.trim().trim_start_matches("**").trim().to_ascii_lowercase();
            Some(v.starts_with("yes"))
        })
        .collect()
}

impl<B: LlmBackend> EntailmentJudge for LlmJudge<B> {
    fn entails(&self, fact: &str, text: &str) -> Result<bool, EvalError> {
        Ok(self.entails_batch(&[fact], text)?[0])
    }

    fn entails_batch(&self, facts: &[&str], text: &str) -> Result<Vec<bool>, EvalError> {
        if facts.is_empty() {
            return Ok(Vec::new());
        }
        let prompt = prompts::judgment(facts, &strip_markup(text));
        let mut raw = self.backend.invoke(&LlmRequest::new("", prompt.clone(), 0.0))?;
        let mut got = parse_judgments(&raw);
        if got.len() != facts.len() {
            let retry = format!("{prompt}\n\nGive exactly {} response blocks, one per element.", facts.len());
            raw = self.backend.invoke(&LlmRequest::new("", retry, 0.0))?;
            got = parse_judgments(&raw);
        }
        if got.len() != facts.len() {
            return Err(EvalError::JudgeMismatch { expected: facts.len(), got: got.len(), raw });
        }
        Ok(got)
    }
}
