use std::collections::HashSet;
use std::io;
use std::ops::Range;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::markup::{comment_spans, ref_elements, template_spans};

const BUNDLED_ABBREVIATIONS: &str = include_str!("../../data/abbreviations.txt");

/// A sentence of a paragraph. `char_span` holds byte offsets into the
/// paragraph text, so `&paragraph[start..end] == text`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub paragraph_index: usize,
    pub char_span: (usize, usize),
}

/// Rule-based sentence splitter with an abbreviation allowlist.
///
/// A boundary is a run of `.`, `!` or `?` (plus closing quotes, brackets and
/// any directly attached `<ref>` elements) followed by whitespace. It is
/// suppressed when the word before a period is an allowlisted abbreviation
/// or a single-letter initial, or when the next word starts lowercase.
/// Terminators inside references, templates, links and comments never split.
#[derive(Debug, Clone)]
pub struct SentenceSplitter {
    abbreviations: HashSet<String>,
    initials: bool,
}

impl SentenceSplitter {
    pub fn new<I, S>(abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            abbreviations: abbreviations
                .into_iter()
                .map(|a| a.as_ref().trim().to_lowercase())
                .filter(|a| !a.is_empty())
                .collect(),
            initials: true,
        }
    }

    /// Parses an allowlist with one token per line.
    pub fn from_allowlist(list: &str) -> Self {
        Self::new(list.lines())
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        Ok(Self::from_allowlist(&std::fs::read_to_string(path)?))
    }

    /// Splits at every terminator followed by whitespace and an uppercase
    /// start, with no abbreviation or initial handling.
    pub fn without_abbreviations() -> Self {
        Self { abbreviations: HashSet::new(), initials: false }
    }

    pub fn split(&self, paragraph: &str) -> Vec<Sentence> {
        self.split_indexed(paragraph, 0)
    }

    pub fn split_indexed(&self, paragraph: &str, paragraph_index: usize) -> Vec<Sentence> {
        let protected = protected_spans(paragraph);
        let refs: Vec<Range<usize>> = ref_elements(paragraph, &[]).into_iter().map(|r| r.span).collect();
        let mut sentences = Vec::new();
        let mut seg_start = 0;
        let mut i = 0;
        while i < paragraph.len() {
            if let Some(r) = protected.iter().find(|r| r.contains(&i)) {
                i = r.end;
                continue;
            }
            let c = paragraph[i..].chars().next().expect("in bounds");
            if !matches!(c, '.' | '!' | '?') {
                i += c.len_utf8();
                continue;
            }
            let end = self.boundary_end(paragraph, i, &refs);
            let at_boundary = paragraph[end..].chars().next().is_none_or(char::is_whitespace);
            let suppressed = !at_boundary
                || (c == '.' && self.is_abbreviation(paragraph, seg_start, i))
                || paragraph[end..].trim_start().chars().next().is_some_and(char::is_lowercase);
            if !suppressed {
                push_trimmed(&mut sentences, paragraph, seg_start..end, paragraph_index);
                seg_start = end;
            }
            i = end;
        }
        push_trimmed(&mut sentences, paragraph, seg_start..paragraph.len(), paragraph_index);
        sentences
    }

    fn boundary_end(&self, text: &str, terminator: usize, refs: &[Range<usize>]) -> usize {
        let mut end = terminator;
        loop {
            if let Some(r) = refs.iter().find(|r| r.start == end) {
                end = r.end;
                continue;
            }
            match text[end..].chars().next() {
                Some(c @ ('.' | '!' | '?' | '"' | '\'' | ')' | ']' | '\u{201D}' | '\u{2019}')) => end += c.len_utf8(),
                _ => break,
            }
        }
        end
    }

    fn is_abbreviation(&self, text: &str, seg_start: usize, period: usize) -> bool {
        let word_start = text[seg_start..period]
            .rfind(char::is_whitespace)
            .map(|p| seg_start + p + 1)
            .unwrap_or(seg_start);
        let word = text[word_start..=period].trim_start_matches(['(', '"', '\'', '[', '\u{201C}']);
        if self.abbreviations.contains(&word.to_lowercase()) {
            return true;
        }
        if self.initials {
            let stem = &word[..word.len() - 1];
            let mut chars = stem.chars();
            if let (Some(ch), None) = (chars.next(), chars.next()) {
                return ch.is_uppercase();
            }
        }
        false
    }
}

fn push_trimmed(out: &mut Vec<Sentence>, text: &str, range: Range<usize>, paragraph_index: usize) {
    let slice = &text[range.clone()];
    let lead = slice.len() - slice.trim_start().len();
    let trimmed = slice.trim();
    if trimmed.is_empty() {
        return;
    }
    let start = range.start + lead;
    out.push(Sentence {
        text: trimmed.to_string(),
        paragraph_index,
        char_span: (start, start + trimmed.len()),
    });
}

static LINK: OnceLock<Regex> = OnceLock::new();

fn protected_spans(text: &str) -> Vec<Range<usize>> {
    let comments = comment_spans(text);
    let mut spans = comments.clone();
    spans.extend(ref_elements(text, &comments).into_iter().map(|r| r.span));
    spans.extend(template_spans(text, &comments));
    let link = LINK.get_or_init(|| {
        Regex::new(r"\[\[[^\[\]]*\]\]|\[(?:https?:)?//[^\[\]]*\]").expect("static regex")
    });
    spans.extend(link.find_iter(text).map(|m| m.range()));
    spans.sort_by_key(|r| r.start);
    spans
}

/// The splitter built from the bundled allowlist.
pub fn default_splitter() -> &'static SentenceSplitter {
    static DEFAULT: OnceLock<SentenceSplitter> = OnceLock::new();
    DEFAULT.get_or_init(|| SentenceSplitter::from_allowlist(BUNDLED_ABBREVIATIONS))
}

pub fn split_sentences(paragraph: &str) -> Vec<Sentence> {
    default_splitter().split(paragraph)
}
