//! Wikitext structure: section hierarchy, paragraphs, citations, special
//! elements and sentences.

mod citations;
mod markup;
mod sections;
mod sentences;
mod special;

pub use citations::extract_citations;
pub use sections::{parse_sections, split_paragraphs, SectionNode, SectionPath, SectionTree};
pub use sentences::{default_splitter, split_sentences, Sentence, SentenceSplitter};
pub use special::{detect_special_elements, SpecialElement};
