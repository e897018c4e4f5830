//! Cleaning of mined human edits before they become editor training data.

use serde::{Deserialize, Serialize};
use tracing::info;

use crate::mining::EditRecord;
use crate::text::token_change;

pub const DEFAULT_PRUNED_SECTIONS: [&str; 5] = ["References", "External links", "See also", "Notes", "Bibliography"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Inclusive bounds on inserted plus deleted words between the
    /// before and after paragraphs.
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub pruned_sections: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_tokens: 3,
            max_tokens: 150,
            pruned_sections: DEFAULT_PRUNED_SECTIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Records dropped per reason. A record failing several checks is counted
/// under the first one in field order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub input: usize,
    pub noise: usize,
    pub size: usize,
    pub revert: usize,
    pub pruned_section: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<EditRecord>,
    pub stats: FilterStats,
}

const MOJIBAKE: [&str; 6] = ["\u{FFFD}", "Ã©", "Ã¨", "â€", "Â ", "Ã\u{a0}"];

/// Control characters (other than newline, tab and carriage return) or
/// common UTF-8-as-Latin-1 sequences.
pub fn is_noisy(text: &str) -> bool {
    text.chars().any(|c| c.is_control() && !matches!(c, '\n' | '\t' | '\r')) || MOJIBAKE.iter().any(|m| text.contains(m))
}

fn record_is_noisy(r: &EditRecord) -> bool {
    r.insertions.iter().chain(&r.removals).any(|s| is_noisy(&s.text)) || is_noisy(&r.paragraph_after)
}

fn sentence_texts(r: &EditRecord, inserted: bool) -> Vec<&str> {
    let list = if inserted { &r.insertions } else { &r.removals };
    list.iter().map(|s| s.text.trim()).collect()
}

/// `later` undoes `earlier`: what one inserted the other removed and
/// vice versa.
pub fn is_revert_pair(earlier: &EditRecord, later: &EditRecord) -> bool {
    earlier.page_title == later.page_title
        && later.to_revision.timestamp >= earlier.to_revision.timestamp
        && earlier.to_revision.revision_id != later.to_revision.revision_id
        && !(earlier.insertions.is_empty() && earlier.removals.is_empty())
        && sentence_texts(earlier, true) == sentence_texts(later, false)
        && sentence_texts(earlier, false) == sentence_texts(later, true)
}

fn in_pruned_section(r: &EditRecord, config: &FilterConfig) -> bool {
    r.section_path
        .headings()
        .iter()
        .any(|h| config.pruned_sections.iter().any(|p| p.eq_ignore_ascii_case(h.trim())))
}

/// Drops noisy, too small or too large, reverted, and reference-like
/// section edits. Idempotent.
pub fn filter_training_edits(records: &[EditRecord], config: &FilterConfig) -> FilterOutcome {
    let mut reverted = vec![false; records.len()];
    for i in 0..records.len() {
        for j in 0..records.len() {
            if i != j && is_revert_pair(&records[i], &records[j]) {
                reverted[i] = true;
                reverted[j] = true;
            }
        }
    }
    let mut stats = FilterStats { input: records.len(), ..Default::default() };
    let mut kept = Vec::new();
    for (r, is_reverted) in records.iter().zip(reverted) {
        let changed = token_change(&r.paragraph_before, &r.paragraph_after);
        if record_is_noisy(r) {
            stats.noise += 1;
        } else if changed < config.min_tokens || changed > config.max_tokens {
            stats.size += 1;
        } else if is_reverted {
            stats.revert += 1;
        } else if in_pruned_section(r, config) {
            stats.pruned_section += 1;
        } else {
            kept.push(r.clone());
        }
    }
    stats.kept = kept.len();
    info!(?stats, "filtered training edits");
    FilterOutcome { kept, stats }
}
