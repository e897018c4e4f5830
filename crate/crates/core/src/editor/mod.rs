//! Paragraph-level editing: integrates an accepted update into the most
//! related paragraph of its target section. Also builds the editor
//! training and evaluation data from mined human edits.

pub mod dataset;
pub mod filter;

use std::collections::HashSet;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::UpdateCandidate;
use crate::llm::{strip_code_fence, LlmBackend, LlmError, LlmRequest};
use crate::prompts;
use crate::revision::Record;
use crate::text::{normalized_tokens, strip_markup};
use crate::wikitext::{SectionNode, SectionPath};

pub use dataset::{
    annotate_attributes, augment_source, AUGMENT_SYSTEM, build_examples, parse_attributes, split_dataset, write_training_file,
    DatasetSplit, EditorExample, SplitSpec, TestSize, TrainingRecord,
};
pub use filter::{filter_training_edits, FilterConfig, FilterOutcome, FilterStats};

#[derive(Debug, Error)]
pub enum EditError {
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("editor returned the paragraph unchanged")]
    NoChange,
    #[error("editor returned an empty paragraph")]
    Empty,
    #[error("section {0} has no editable prose paragraph")]
    NotEditable(SectionPath),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("could not parse response: {message}")]
    Parse { message: String, raw: String },
    #[error("augmented source has {got} sentences after retries, expected 3 to 5")]
    SentenceCount { got: usize },
    #[error("need {needed} entities for the test split, corpus has {available}")]
    InsufficientData { needed: usize, available: usize },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditSuggestion {
    pub id: String,
    pub page_title: String,
    pub base_revision: u64,
    pub section_path: SectionPath,
    pub paragraph_before: String,
    pub paragraph_after: String,
    pub update: UpdateCandidate,
    pub citation_url: String,
    pub created_at: DateTime<Utc>,
}

impl Record for EditSuggestion {
    const KIND: &'static str = "edit_suggestion";
}

/// Stable suggestion id derived from page, base revision, update and time.
pub fn suggestion_id(page_title: &str, base_revision: u64, update_id: u64, created_at: DateTime<Utc>) -> String {
    let mut h = Sha256::new();
    h.update(page_title.as_bytes());
    h.update([0]);
    h.update(base_revision.to_le_bytes());
    h.update(update_id.to_le_bytes());
    h.update(created_at.to_rfc3339().as_bytes());
    hex::encode(&h.finalize()[..8])
}

/// Something that rewrites a paragraph to include a piece of news.
pub trait EditorBackend: Send + Sync {
    fn model_identifier(&self) -> &str;
    /// `note` is extra guidance appended on a retry.
    fn apply(&self, original_paragraph: &str, update_text: &str, note: Option<&str>) -> Result<String, EditError>;
}

/// Editor driven by the editing prompt. Works both for general chat models
/// and for fine-tuned editors served behind a chat-completion endpoint,
/// since the fine-tuning data uses the same filled prompt as instruction.
pub struct LlmEditor {
    backend: Arc<dyn LlmBackend>,
}

impl LlmEditor {
    pub fn new(backend: Arc<dyn LlmBackend>) -> Self {
        Self { backend }
    }
}

/// Removes labels and fences models tend to wrap around the paragraph.
pub fn clean_editor_output(raw: &str) -> String {
    let mut s = strip_code_fence(raw).trim();
    for label in ["**Updated Paragraph**", "Updated Paragraph:", "Updated Paragraph"] {
        if let Some(rest) = s.strip_prefix(label) {
            s = rest.trim_start_matches(':').trim();
        }
    }
    s.to_string()
}

impl EditorBackend for LlmEditor {
    fn model_identifier(&self) -> &str {
        self.backend.model_identifier()
    }

    fn apply(&self, original_paragraph: &str, update_text: &str, note: Option<&str>) -> Result<String, EditError> {
        let mut prompt = prompts::editing(original_paragraph, update_text);
        if let Some(note) = note {
            prompt = format!("{note}\n\n{prompt}");
        }
        let raw = self.backend.invoke(&LlmRequest::new("", prompt, 0.0))?;
        Ok(clean_editor_output(&raw))
    }
}

/// The prose paragraph of `section` sharing the most normalized tokens with
/// `fact`; the first one wins ties.
pub fn select_paragraph<'a>(section: &'a SectionNode, fact: &str) -> Option<&'a str> {
    let fact_tokens: HashSet<String> = normalized_tokens(fact).into_iter().collect();
    let mut best: Option<(usize, &str)> = None;
    for (_, p) in section.prose_paragraphs() {
        let tokens: HashSet<String> = normalized_tokens(&strip_markup(p)).into_iter().collect();
        let overlap = tokens.intersection(&fact_tokens).count();
        if best.is_none_or(|(b, _)| overlap > b) {
            best = Some((overlap, p));
        }
    }
    best.map(|(_, p)| p)
}

fn unchanged(before: &str, after: &str) -> bool {
    before.split_whitespace().eq(after.split_whitespace())
}

/// Integrates `update` into `paragraph`. An unchanged or empty answer is
/// retried once with an explicit reminder before failing.
pub fn apply_edit(
    page_title: &str,
    base_revision: u64,
    paragraph: &str,
    update: &UpdateCandidate,
    editor: &dyn EditorBackend,
    created_at: DateTime<Utc>,
) -> Result<EditSuggestion, EditError> {
    if update.target_section.is_unmapped() {
        return Err(EditError::NotEditable(update.target_section.clone()));
    }
    if paragraph.trim().is_empty() {
        return Err(EditError::Precondition("paragraph is empty".into()));
    }
    let mut after = editor.apply(paragraph, &update.fact_text, None)?;
    if after.is_empty() || unchanged(paragraph, &after) {
        let note = "Your previous answer did not integrate the news information. \
Return the full paragraph with the news information added.";
        after = editor.apply(paragraph, &update.fact_text, Some(note))?;
    }
    if after.is_empty() {
        return Err(EditError::Empty);
    }
    if unchanged(paragraph, &after) {
        return Err(EditError::NoChange);
    }
    Ok(EditSuggestion {
        id: suggestion_id(page_title, base_revision, update.id, created_at),
        page_title: page_title.to_string(),
        base_revision,
        section_path: update.target_section.clone(),
        paragraph_before: paragraph.to_string(),
        paragraph_after: after,
        update: update.clone(),
        citation_url: update.source_url.clone(),
        created_at,
    })
}
