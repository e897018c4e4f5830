//! Mining of Wikipedia edit histories, agentic discovery of article
//! updates, paragraph-level editing and coverage evaluation against human
//! edits.

pub mod agent;
pub mod criteria;
pub mod editor;
pub mod eval;
pub mod llm;
pub mod mining;
pub mod prompts;
pub mod revision;
pub mod text;
pub mod wikitext;

pub use wikitext::SectionPath;
