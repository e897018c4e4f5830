use serde::{Deserialize, Serialize};
use tracing::warn;

use super::EntailmentJudge;
use crate::editor::EditorExample;
use crate::text::token_change;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditorMetrics {
    pub example_id: String,
    pub token_change: usize,
    pub key_facts_coverage: f64,
    pub commentary_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditorReport {
    pub per_example: Vec<EditorMetrics>,
    pub mean_token_change: f64,
    pub mean_key_facts_coverage: f64,
    pub mean_commentary_coverage: f64,
}

fn fraction_present(phrases: &[String], paragraph: &str, judge: &dyn EntailmentJudge) -> f64 {
    if phrases.is_empty() {
        return 0.0;
    }
    let texts: Vec<&str> = phrases.iter().map(String::as_str).collect();
    let hits = judge.entails_batch(&texts, paragraph).unwrap_or_else(|e| {
        warn!(error = %e, "batch judgment failed; judging phrases one by one");
        texts
            .iter()
            .map(|p| {
                judge.entails(p, paragraph).unwrap_or_else(|e| {
                    warn!(phrase = p, error = %e, "judge failed; counting as absent");
                    false
                })
            })
            .collect()
    });
    hits.iter().filter(|h| **h).count() as f64 / phrases.len() as f64
}

/// Share of the example's key facts present in `produced`.
pub fn key_facts_coverage(example: &EditorExample, produced: &str, judge: &dyn EntailmentJudge) -> f64 {
    fraction_present(&example.key_facts, produced, judge)
}

/// Share of the example's commentary phrases that leaked into `produced`.
pub fn commentary_coverage(example: &EditorExample, produced: &str, judge: &dyn EntailmentJudge) -> f64 {
    fraction_present(&example.commentary_phrases, produced, judge)
}

/// Metrics for each `(example, produced paragraph)` pair and their means.
pub fn evaluate_editor(pairs: &[(&EditorExample, &str)], judge: &dyn EntailmentJudge) -> EditorReport {
    let per_example: Vec<EditorMetrics> = pairs
        .iter()
        .map(|(ex, produced)| EditorMetrics {
            example_id: ex.id.clone(),
            token_change: token_change(&ex.original_paragraph, produced),
            key_facts_coverage: key_facts_coverage(ex, produced, judge),
            commentary_coverage: commentary_coverage(ex, produced, judge),
        })
        .collect();
    let n = per_example.len().max(1) as f64;
    EditorReport {
        mean_token_change: per_example.iter().map(|m| m.token_change as f64).sum::<f64>() / n,
        mean_key_facts_coverage: per_example.iter().map(|m| m.key_facts_coverage).sum::<f64>() / n,
        mean_commentary_coverage: per_example.iter().map(|m| m.commentary_coverage).sum::<f64>() / n,
        per_example,
    }
}
