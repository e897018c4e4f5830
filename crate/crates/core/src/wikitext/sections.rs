use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::citations::extract_citations;
use super::markup::{comment_spans, element_spans, template_spans};
use super::special::{detect_special_elements, SpecialElement};

/// Heading path from the top-level section down to a (sub)subsection.
///
/// The lead section is the empty path. Two sentinel paths exist: `(page)`
/// for whole-page diffs and `(unmapped)` for updates without a section.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SectionPath {
    headings: Vec<String>,
}

const LEAD_LABEL: &str = "(lead)";
const PAGE_LABEL: &str = "(page)";
const UNMAPPED_LABEL: &str = "(unmapped)";
const SEPARATOR: &str = " > ";

impl SectionPath {
    pub fn new<I, S>(headings: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self { headings: headings.into_iter().map(|h| h.as_ref().trim().to_string()).collect() }
    }

    pub fn lead() -> Self {
        Self::default()
    }

    pub fn page() -> Self {
        Self { headings: vec![PAGE_LABEL.to_string()] }
    }

    pub fn unmapped() -> Self {
        Self { headings: vec![UNMAPPED_LABEL.to_string()] }
    }

    pub fn headings(&self) -> &[String] {
        &self.headings
    }

    pub fn is_lead(&self) -> bool {
        self.headings.is_empty()
    }

    pub fn is_page(&self) -> bool {
        self.headings.len() == 1 && self.headings[0] == PAGE_LABEL
    }

    pub fn is_unmapped(&self) -> bool {
        self.headings.len() == 1 && self.headings[0] == UNMAPPED_LABEL
    }

    /// Innermost heading, `None` for the lead.
    pub fn last(&self) -> Option<&str> {
        self.headings.last().map(String::as_str)
    }

    pub fn child(&self, heading: &str) -> Self {
        let mut headings = self.headings.clone();
        headings.push(heading.trim().to_string());
        Self { headings }
    }

    /// Inverse of `Display`: `(lead)` or headings joined by ` > `.
    pub fn parse(s: &str) -> Self {
        let s = s.trim();
        if s.is_empty() || s == LEAD_LABEL {
            return Self::lead();
        }
        Self::new(s.split(SEPARATOR.trim()).map(str::trim).filter(|h| !h.is_empty()))
    }
}

impl fmt::Display for SectionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_lead() {
            f.write_str(LEAD_LABEL)
        } else {
            f.write_str(&self.headings.join(SEPARATOR))
        }
    }
}

/// One section of an article: its own heading line and the body text up to
/// the next heading of any level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionNode {
    pub path: SectionPath,
    /// Trimmed heading title; empty for the lead.
    pub heading: String,
    /// 2..=6 for headed sections, 1 for the lead.
    pub heading_level: u8,
    pub parent: Option<usize>,
    /// The raw heading line including its newline; empty for the lead.
    pub heading_line: String,
    pub text: String,
    pub paragraphs: Vec<String>,
    pub citation_urls: Vec<String>,
    pub special_elements: BTreeSet<SpecialElement>,
}

impl SectionNode {
    fn new(path: SectionPath, heading: String, level: u8, parent: Option<usize>, heading_line: String, text: String) -> Self {
        Self {
            paragraphs: split_paragraphs(&text),
            citation_urls: extract_citations(&text),
            special_elements: detect_special_elements(&text),
            path,
            heading,
            heading_level: level,
            parent,
            heading_line,
            text,
        }
    }

    /// Paragraphs carrying running prose, i.e. not list, table, gallery or
    /// standalone template/file blocks.
    pub fn prose_paragraphs(&self) -> impl Iterator<Item = (usize, &str)> {
        self.paragraphs
            .iter()
            .enumerate()
            .filter(|(_, p)| is_prose(p))
            .map(|(i, p)| (i, p.as_str()))
    }

    pub fn has_prose(&self) -> bool {
        self.prose_paragraphs().next().is_some()
    }
}

/// An article's sections in document order. `nodes[0]` is always the lead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionTree {
    pub nodes: Vec<SectionNode>,
}

impl SectionTree {
    pub fn lead(&self) -> &SectionNode {
        &self.nodes[0]
    }

    pub fn find(&self, path: &SectionPath) -> Option<&SectionNode> {
        self.nodes.iter().find(|n| &n.path == path)
    }

    pub fn paths(&self) -> impl Iterator<Item = &SectionPath> {
        self.nodes.iter().map(|n| &n.path)
    }

    pub fn children(&self, idx: usize) -> impl Iterator<Item = &SectionNode> {
        self.nodes.iter().filter(move |n| n.parent == Some(idx))
    }

    /// Headed sections, excluding the lead.
    pub fn section_count(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Heading lines and bodies in document order; byte-identical to the
    /// parsed input.
    pub fn reconstruct(&self) -> String {
        self.nodes.iter().flat_map(|n| [n.heading_line.as_str(), n.text.as_str()]).collect()
    }

    /// Heading path sequence, used to decide whether two revisions share a
    /// hierarchy.
    pub fn hierarchy(&self) -> Vec<&SectionPath> {
        self.paths().collect()
    }
}

struct HeadingLine {
    line: Range<usize>,
    /// Start of the following line (or end of input).
    next: usize,
    level: u8,
    title: String,
}

/// Parses wikitext into its section hierarchy. Total: malformed markup is
/// treated as body text.
pub fn parse_sections(wikitext: &str) -> SectionTree {
    let comments = comment_spans(wikitext);
    let mut opaque = element_spans(wikitext, "nowiki", &comments);
    opaque.extend(element_spans(wikitext, "pre", &comments));
    let mut skip = comments.clone();
    skip.extend(opaque.iter().cloned());
    opaque.extend(template_spans(wikitext, &skip));

    let headings = find_headings(wikitext, &comments, &opaque);

    let lead_end = headings.first().map(|h| h.line.start).unwrap_or(wikitext.len());
    let mut nodes = vec![SectionNode::new(
        SectionPath::lead(),
        String::new(),
        1,
        None,
        String::new(),
        wikitext[..lead_end].to_string(),
    )];

    let mut stack: Vec<(u8, usize)> = Vec::new();
    for (i, h) in headings.iter().enumerate() {
        while stack.last().is_some_and(|(level, _)| *level >= h.level) {
            stack.pop();
        }
        let parent = stack.last().map(|(_, idx)| *idx);
        let path = match parent {
            Some(p) => nodes[p].path.child(&h.title),
            None => SectionPath::new([h.title.as_str()]),
        };
        let body_end = headings.get(i + 1).map(|n| n.line.start).unwrap_or(wikitext.len());
        let idx = nodes.len();
        nodes.push(SectionNode::new(
            path,
            h.title.clone(),
            h.level,
            parent,
            wikitext[h.line.start..h.next].to_string(),
            wikitext[h.next..body_end].to_string(),
        ));
        stack.push((h.level, idx));
    }

    SectionTree { nodes }
}

fn find_headings(text: &str, comments: &[Range<usize>], opaque: &[Range<usize>]) -> Vec<HeadingLine> {
    let mut found = Vec::new();
    let mut start = 0;
    while start < text.len() {
        let end = text[start..].find('\n').map(|i| start + i).unwrap_or(text.len());
        let next = if end < text.len() { end + 1 } else { end };
        if let Some((level, title)) = heading_on_line(text, start..end, comments, opaque) {
            found.push(HeadingLine { line: start..end, next, level, title });
        }
        start = next;
    }
    found
}

fn heading_on_line(
    text: &str,
    line: Range<usize>,
    comments: &[Range<usize>],
    opaque: &[Range<usize>],
) -> Option<(u8, String)> {
    if !text[line.clone()].starts_with('=') {
        return None;
    }
    let overlaps = |r: &Range<usize>| r.start < line.end.max(line.start + 1) && line.start < r.end;
    if opaque.iter().any(overlaps) {
        return None;
    }
    // Comments are allowed only when they open and close on this line.
    let mut content = String::with_capacity(line.len());
    let mut pos = line.start;
    for c in comments.iter().filter(|r| overlaps(r)) {
        if c.start < line.start || c.end > line.end {
            return None;
        }
        content.push_str(&text[pos..c.start]);
        pos = c.end;
    }
    content.push_str(&text[pos..line.end]);

    let s = content.trim_end_matches([' ', '\t', '\r']);
    let leading = s.bytes().take_while(|&b| b == b'=').count();
    let trailing = s.bytes().rev().take_while(|&b| b == b'=').count();
    if leading == s.len() {
        return None;
    }
    let level = leading.min(trailing).min(6);
    if level < 2 {
        return None;
    }
    let title = s[level..s.len() - level].trim();
    if title.is_empty() {
        return None;
    }
    Some((level as u8, title.to_string()))
}

/// Blank-line separated blocks, trimmed, empty blocks dropped.
pub fn split_paragraphs(text: &str) -> Vec<String> {
    let mut paragraphs = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                paragraphs.push(current.join("\n").trim().to_string());
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        paragraphs.push(current.join("\n").trim().to_string());
    }
    paragraphs.retain(|p| !p.is_empty());
    paragraphs
}

fn is_prose(paragraph: &str) -> bool {
    let p = paragraph.trim_start();
    const NON_PROSE_PREFIXES: [&str; 8] = ["{|", "*", "#", ":", ";", "|", "!", "<gallery"];
    if NON_PROSE_PREFIXES.iter().any(|pre| p.starts_with(pre)) {
        return false;
    }
    let lower = p.to_ascii_lowercase();
    if (lower.starts_with("[[file:") || lower.starts_with("[[image:")) && p.trim_end().ends_with("]]") {
        return false;
    }
    if p.starts_with("{{") && template_spans(p, &[]).first().is_some_and(|r| r.start == 0 && r.end == p.trim_end().len()) {
        return false;
    }
    !crate::text::normalized_tokens(p).is_empty()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lead_and_one_section() {
        let tree = parse_sections("lead\n== A ==\nbody");
        assert_eq!(tree.nodes.len(), 2);
        assert!(tree.nodes[0].path.is_lead());
        assert_eq!(tree.nodes[0].text, "lead\n");
        assert_eq!(tree.nodes[1].path, SectionPath::new(["A"]));
        assert_eq!(tree.nodes[1].heading_level, 2);
        assert_eq!(tree.nodes[1].text, "body");
    }

    #[test]
    fn nesting_by_level() {
        let tree = parse_sections("== A ==\n=== B ===\ntext");
        let b = tree.find(&SectionPath::new(["A", "B"])).unwrap();
        assert_eq!(b.parent, Some(1));
        assert_eq!(b.heading_level, 3);
        assert_eq!(tree.children(1).count(), 1);
    }

    #[test]
    fn skipped_level_and_siblings() {
        let tree = parse_sections("== A ==\n==== C ====\n== D ==\n=== E ===\n");
        let paths: Vec<String> = tree.paths().map(|p| p.to_string()).collect();
        assert_eq!(paths, ["(lead)", "A", "A > C", "D", "D > E"]);
    }

    #[test]
    fn headings_inside_opaque_markup_are_text() {
        let src = "x\n<!--\n== Hidden ==\n-->\n<nowiki>\n== Nowiki ==\n</nowiki>\n{{Template\n== InTemplate ==\n}}\n== Real ==<!-- note -->\nbody\n";
        let tree = parse_sections(src);
        assert_eq!(tree.section_count(), 1);
        assert_eq!(tree.nodes[1].heading, "Real");
        assert_eq!(tree.reconstruct(), src);
    }

    #[test]
    fn unbalanced_and_level_one() {
        let tree = parse_sections("= Top =\n=== A ==\n======= Deep =======\n");
        assert_eq!(tree.nodes[1].heading, "= A");
        assert_eq!(tree.nodes[1].heading_level, 2);
        assert_eq!(tree.nodes[2].heading_level, 6);
        assert_eq!(tree.nodes[2].heading, "= Deep =");
        assert!(tree.lead().text.starts_with("= Top ="));
    }

    #[test]
    fn path_display_round_trip() {
        for p in [SectionPath::lead(), SectionPath::new(["Career", "Ferrari 2025"]), SectionPath::page()] {
            assert_eq!(SectionPath::parse(&p.to_string()), p);
        }
    }

    #[test]
    fn prose_detection() {
        let tree = parse_sections("== T ==\n{| class=wikitable\n|a\n|}\n\n* item\n\nReal prose here.\n");
        let prose: Vec<_> = tree.nodes[1].prose_paragraphs().map(|(_, p)| p).collect();
        assert_eq!(prose, ["Real prose here."]);
    }
}
