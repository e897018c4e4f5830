//! Human edit extraction from consecutive revisions.

mod dates;
mod diff;
mod factual;

use std::collections::HashSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::revision::{ArticleSnapshot, Record, RevisionMeta};
use crate::wikitext::{SectionPath, Sentence};

pub use dates::{extract_publication_date, DateResolver};
pub use diff::{diff_revisions, is_superficial, new_citations};
pub use factual::{edit_lag_days, identify_factual, lag_distribution, LagBucketCount, LagBuckets, LagReport};

/// A human edit to one section between two consecutive revisions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRecord {
    pub page_title: String,
    pub from_revision: RevisionMeta,
    pub to_revision: RevisionMeta,
    pub section_path: SectionPath,
    pub insertions: Vec<Sentence>,
    pub removals: Vec<Sentence>,
    pub paragraph_before: String,
    pub paragraph_after: String,
    pub new_citation_urls: Vec<String>,
    /// Set when the heading hierarchy changed and the whole page was diffed.
    pub page_level: bool,
}

impl EditRecord {
    /// Stable identifier: page, revision pair and section.
    pub fn id(&self) -> String {
        format!(
            "{}@{}-{}#{}",
            self.page_title, self.from_revision.revision_id, self.to_revision.revision_id, self.section_path
        )
    }
}

/// A non-superficial edit that introduced at least one new citation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactualEdit {
    pub record: EditRecord,
    pub source_urls: Vec<String>,
    pub source_publication_dates: Vec<Option<NaiveDate>>,
    pub edit_lag_days: Vec<Option<f64>>,
}

impl FactualEdit {
    pub fn id(&self) -> String {
        self.record.id()
    }

    pub fn section(&self) -> &SectionPath {
        &self.record.section_path
    }
}

impl Record for EditRecord {
    const KIND: &'static str = "edit_record";
}

impl Record for FactualEdit {
    const KIND: &'static str = "factual_edit";
}

/// All edits of a revision sequence, split into the nested sets
/// factual ⊆ substantive ⊆ all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinedEdits {
    pub all: Vec<EditRecord>,
    pub substantive: Vec<EditRecord>,
    pub factual: Vec<FactualEdit>,
}

/// Diffs each consecutive pair of snapshots, drops superficial edits and
/// identifies factual ones.
///
/// # Panics
///
/// If the nested-set invariant factual ⊆ substantive ⊆ all is violated.
pub fn mine_history<F>(snapshots: &[ArticleSnapshot], date_lookup: F) -> MinedEdits
where
    F: Fn(&str) -> Option<NaiveDate>,
{
    let all: Vec<EditRecord> = snapshots.windows(2).flat_map(|w| diff_revisions(&w[0], &w[1])).collect();
    let substantive: Vec<EditRecord> = all.iter().filter(|r| !is_superficial(r)).cloned().collect();
    let factual = identify_factual(&substantive, date_lookup);

    let all_ids: HashSet<String> = all.iter().map(EditRecord::id).collect();
    let substantive_ids: HashSet<String> = substantive.iter().map(EditRecord::id).collect();
    assert!(substantive_ids.is_subset(&all_ids), "substantive edits must be a subset of all edits");
    assert!(
        factual.iter().all(|f| substantive_ids.contains(&f.id())),
        "factual edits must be a subset of substantive edits"
    );

    MinedEdits { all, substantive, factual }
}

/// What the page-inclusion threshold counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditCountBasis {
    All,
    Substantive,
    #[default]
    Factual,
}

/// Minimum number of human edits a page needs to be included in an
/// evaluation.
pub const DEFAULT_MIN_HUMAN_EDITS: usize = 25;

pub fn meets_edit_threshold(mined: &MinedEdits, min_edits: usize, basis: EditCountBasis) -> bool {
    let n = match basis {
        EditCountBasis::All => mined.all.len(),
        EditCountBasis::Substantive => mined.substantive.len(),
        EditCountBasis::Factual => mined.factual.len(),
    };
    n >= min_edits
}
