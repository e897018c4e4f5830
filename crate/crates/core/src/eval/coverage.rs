//! Coverage of human edits by agent edits.
//!
//! For a human edit with atomic facts `c_1..c_k`, a fact is covered when
//! some agent edit's after-paragraph entails it. Hard coverage only counts
//! agent edits in the same section path; soft coverage counts all of them.
//! Page-level human edits have no section and are never hard-covered.

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{decompose, AtomicFact, EntailmentJudge, EvalError};
use crate::editor::EditSuggestion;
use crate::llm::LlmBackend;
use crate::mining::FactualEdit;
use crate::revision::Record;
use crate::wikitext::SectionPath;

/// A human edit reduced to what scoring needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanEditFacts {
    pub edit_id: String,
    pub section: SectionPath,
    pub facts: Vec<AtomicFact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditCoverage {
    pub human_edit_id: String,
    pub section: SectionPath,
    pub atomic_facts: Vec<AtomicFact>,
    pub covered_hard: Vec<bool>,
    pub covered_soft: Vec<bool>,
    pub score_hard: f64,
    pub score_soft: f64,
    /// Some same-section agent edit entails at least one fact.
    pub section_accurate: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageCounts {
    pub human_edits: usize,
    pub agent_edits: usize,
    pub atomic_facts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub per_edit: Vec<EditCoverage>,
    /// Micro averages: covered facts over all facts.
    pub c_hard: f64,
    pub c_soft: f64,
    /// Macro averages: mean of per-edit scores.
    pub c_hard_macro: f64,
    pub c_soft_macro: f64,
    pub s_acc: f64,
    pub counts: CoverageCounts,
    /// Human edits left out because they have no atomic facts.
    pub flagged: Vec<String>,
}

impl Record for CoverageReport {
    const KIND: &'static str = "coverage_report";
}

impl Record for HumanEditFacts {
    const KIND: &'static str = "human_edit_facts";
}

impl CoverageReport {
    /// Pools several reports (e.g. one per page) into one, recomputing the
    /// averages over the combined human edits.
    pub fn merge(reports: &[CoverageReport]) -> CoverageReport {
        let per_edit: Vec<EditCoverage> = reports.iter().flat_map(|r| r.per_edit.iter().cloned()).collect();
        let agent_edits = reports.iter().map(|r| r.counts.agent_edits).sum();
        let flagged = reports.iter().flat_map(|r| r.flagged.iter().cloned()).collect();
        summarize(per_edit, agent_edits, flagged)
    }
}

fn summarize(per_edit: Vec<EditCoverage>, agent_edits: usize, flagged: Vec<String>) -> CoverageReport {
    let total_facts: usize = per_edit.iter().map(|e| e.atomic_facts.len()).sum();
    let hard: usize = per_edit.iter().map(|e| e.covered_hard.iter().filter(|c| **c).count()).sum();
    let soft: usize = per_edit.iter().map(|e| e.covered_soft.iter().filter(|c| **c).count()).sum();
    CoverageReport {
        c_hard: ratio(hard, total_facts),
        c_soft: ratio(soft, total_facts),
        c_hard_macro: mean(per_edit.iter().map(|e| e.score_hard)),
        c_soft_macro: mean(per_edit.iter().map(|e| e.score_soft)),
        s_acc: ratio(per_edit.iter().filter(|e| e.section_accurate).count(), per_edit.len()),
        counts: CoverageCounts { human_edits: per_edit.len(), agent_edits, atomic_facts: total_facts },
        per_edit,
        flagged,
    }
}

/// Entailment of one fact by one suggestion's after-paragraph. Judge
/// failures count as not entailed.
pub fn entail(fact: &AtomicFact, suggestion: &EditSuggestion, judge: &dyn EntailmentJudge) -> bool {
    judge.entails(&fact.text, &suggestion.paragraph_after).unwrap_or_else(|e| {
        warn!(fact = fact.text, suggestion = suggestion.id, error = %e, "judge failed; counting as not entailed");
        false
    })
}

fn judge_batch(facts: &[AtomicFact], suggestion: &EditSuggestion, judge: &dyn EntailmentJudge) -> Vec<bool> {
    let texts: Vec<&str> = facts.iter().map(|f| f.text.as_str()).collect();
    match judge.entails_batch(&texts, &suggestion.paragraph_after) {
        Ok(v) => v,
        Err(e) => {
            warn!(suggestion = suggestion.id, error = %e, "batch judgment failed; judging facts one by one");
            facts.iter().map(|f| entail(f, suggestion, judge)).collect()
        }
    }
}

/// Fraction of `facts` entailed by at least one of `agent_edits`; 0 when
/// either list is empty.
pub fn score_edit(facts: &[AtomicFact], agent_edits: &[EditSuggestion], judge: &dyn EntailmentJudge) -> f64 {
    if facts.is_empty() {
        return 0.0;
    }
    let mut covered = vec![false; facts.len()];
    for a in agent_edits {
        for (c, hit) in covered.iter_mut().zip(judge_batch(facts, a, judge)) {
            *c |= hit;
        }
    }
    covered.iter().filter(|c| **c).count() as f64 / facts.len() as f64
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn coverage_with_facts(
    human: &[HumanEditFacts],
    agent_edits: &[EditSuggestion],
    judge: &dyn EntailmentJudge,
) -> CoverageReport {
    let mut per_edit = Vec::new();
    let mut flagged = Vec::new();
    for h in human {
        if h.facts.is_empty() {
            flagged.push(h.edit_id.clone());
            continue;
        }
        let k = h.facts.len();
        let mut covered_hard = vec![false; k];
        let mut covered_soft = vec![false; k];
        let mut section_accurate = false;
        for a in agent_edits {
            let hits = judge_batch(&h.facts, a, judge);
            let same_section = !h.section.is_page() && a.section_path == h.section;
            for (i, hit) in hits.into_iter().enumerate() {
                covered_soft[i] |= hit;
                if same_section {
                    covered_hard[i] |= hit;
                    section_accurate |= hit;
                }
            }
        }
        let count = |v: &[bool]| v.iter().filter(|c| **c).count();
        per_edit.push(EditCoverage {
            human_edit_id: h.edit_id.clone(),
            section: h.section.clone(),
            atomic_facts: h.facts.clone(),
            score_hard: ratio(count(&covered_hard), k),
            score_soft: ratio(count(&covered_soft), k),
            covered_hard,
            covered_soft,
            section_accurate,
        });
    }
    summarize(per_edit, agent_edits.len(), flagged)
}

/// Decomposes each human edit, then scores. Edits whose decomposition
/// fails are flagged rather than aborting the report.
pub fn coverage(
    human_edits: &[FactualEdit],
    agent_edits: &[EditSuggestion],
    judge: &dyn EntailmentJudge,
    backend: &dyn LlmBackend,
) -> CoverageReport {
    let human: Vec<HumanEditFacts> = human_edits
        .iter()
        .map(|e| {
            let facts = decompose(e, backend).unwrap_or_else(|err: EvalError| {
                warn!(edit = e.id(), error = %err, "decomposition failed");
                Vec::new()
            });
            HumanEditFacts { edit_id: e.id(), section: e.section().clone(), facts }
        })
        .collect();
    coverage_with_facts(&human, agent_edits, judge)
}

fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

/// Markdown table with one row per method.
pub fn summary_table(rows: &[(&str, &CoverageReport)]) -> String {
    let mut out = String::from("| Method | C_hard (%) | C_soft (%) | S_Acc (%) |\n|---|---|---|---|\n");
    for (method, r) in rows {
        out.push_str(&format!("| {method} | {} | {} | {} |\n", pct(r.c_hard), pct(r.c_soft), pct(r.s_acc)));
    }
    out
}

/// Counts, macro averages and per-edit scores.
pub fn render_detail(report: &CoverageReport) -> String {
    let mut out = format!(
        "human edits: {}  agent edits: {}  atomic facts: {}  flagged (no facts): {}\n\
micro C_hard {}%  C_soft {}%  |  macro C_hard {}%  C_soft {}%  |  S_Acc {}%\n",
        report.counts.human_edits,
        report.counts.agent_edits,
        report.counts.atomic_facts,
        report.flagged.len(),
        pct(report.c_hard),
        pct(report.c_soft),
        pct(report.c_hard_macro),
        pct(report.c_soft_macro),
        pct(report.s_acc),
    );
    for e in &report.per_edit {
        out.push_str(&format!(
            "  {}  [{}]  hard {:.2}  soft {:.2}{}\n",
            e.human_edit_id,
            e.section,
            e.score_hard,
            e.score_soft,
            if e.section_accurate { "  section-accurate" } else { "" }
        ));
    }
    out
}
