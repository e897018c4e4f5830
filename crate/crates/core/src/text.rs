//! Shared text utilities: markup stripping, token normalization and
//! longest-common-subsequence alignment.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("static regex"))
}

/// One step of an alignment between two sequences `a` and `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffOp {
    /// `a[a_idx] == b[b_idx]`, kept on both sides.
    Equal { a_idx: usize, b_idx: usize },
    /// `a[a_idx]` removed.
    Delete { a_idx: usize },
    /// `b[b_idx]` inserted.
    Insert { b_idx: usize },
}

/// Aligns two sequences with a longest-common-subsequence table.
///
/// Common prefixes and suffixes are stripped before the quadratic table is
/// built. Ties during backtracking prefer deletions before insertions so the
/// output is stable for a given input pair.
pub fn lcs_diff<T: PartialEq>(a: &[T], b: &[T]) -> Vec<DiffOp> {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let a_rest = &a[prefix..];
    let b_rest = &b[prefix..];
    let suffix = a_rest
        .iter()
        .rev()
        .zip(b_rest.iter().rev())
        .take_while(|(x, y)| x == y)
        .count();
    let a_mid = &a_rest[..a_rest.len() - suffix];
    let b_mid = &b_rest[..b_rest.len() - suffix];

    let mut ops = Vec::with_capacity(a.len().max(b.len()));
    for i in 0..prefix {
        ops.push(DiffOp::Equal { a_idx: i, b_idx: i });
    }

    let n = a_mid.len();
    let m = b_mid.len();
    if n == 0 || m == 0 {
        ops.extend((0..n).map(|i| DiffOp::Delete { a_idx: prefix + i }));
        ops.extend((0..m).map(|j| DiffOp::Insert { b_idx: prefix + j }));
    } else {
        // table[i][j] = LCS length of a_mid[i..] and b_mid[j..]
        let width = m + 1;
        let mut table = vec![0u32; (n + 1) * width];
        for i in (0..n).rev() {
            for j in (0..m).rev() {
                table[i * width + j] = if a_mid[i] == b_mid[j] {
                    table[(i + 1) * width + j + 1] + 1
                } else {
                    table[(i + 1) * width + j].max(table[i * width + j + 1])
                };
            }
        }
        let (mut i, mut j) = (0, 0);
        while i < n && j < m {
            if a_mid[i] == b_mid[j] {
                ops.push(DiffOp::Equal { a_idx: prefix + i, b_idx: prefix + j });
                i += 1;
                j += 1;
            } else if table[(i + 1) * width + j] >= table[i * width + j + 1] {
                ops.push(DiffOp::Delete { a_idx: prefix + i });
                i += 1;
            } else {
                ops.push(DiffOp::Insert { b_idx: prefix + j });
                j += 1;
            }
        }
        ops.extend((i..n).map(|i| DiffOp::Delete { a_idx: prefix + i }));
        ops.extend((j..m).map(|j| DiffOp::Insert { b_idx: prefix + j }));
    }

    let tail_a = prefix + n;
    let tail_b = prefix + m;
    for k in 0..suffix {
        ops.push(DiffOp::Equal { a_idx: tail_a + k, b_idx: tail_b + k });
    }
    ops
}

/// Whitespace-delimited words, the unit of the token-change metric.
pub fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

/// Number of inserted plus deleted words in an LCS alignment of the two
/// texts' whitespace tokens.
pub fn token_change(before: &str, after: &str) -> usize {
    let a = words(before);
    let b = words(after);
    lcs_diff(&a, &b)
        .iter()
        .filter(|op| !matches!(op, DiffOp::Equal { .. }))
        .count()
}

/// Kind of a run of words in a rendered word diff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Equal,
    Delete,
    Insert,
}

/// A maximal run of words sharing one diff kind.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DiffSegment {
    pub kind: SegmentKind,
    pub words: Vec<String>,
}

/// Word-level diff grouped into runs, suitable for highlighting. The number
/// of words in non-equal segments equals [`token_change`].
pub fn word_diff(before: &str, after: &str) -> Vec<DiffSegment> {
    let a = words(before);
    let b = words(after);
    let mut segments: Vec<DiffSegment> = Vec::new();
    for op in lcs_diff(&a, &b) {
        let (kind, word) = match op {
            DiffOp::Equal { a_idx, .. } => (SegmentKind::Equal, a[a_idx]),
            DiffOp::Delete { a_idx } => (SegmentKind::Delete, a[a_idx]),
            DiffOp::Insert { b_idx } => (SegmentKind::Insert, b[b_idx]),
        };
        match segments.last_mut() {
            Some(last) if last.kind == kind => last.words.push(word.to_string()),
            _ => segments.push(DiffSegment { kind, words: vec![word.to_string()] }),
        }
    }
    segments
}

static REF_ELEMENT: OnceLock<Regex> = OnceLock::new();
static COMMENT: OnceLock<Regex> = OnceLock::new();
static WIKILINK: OnceLock<Regex> = OnceLock::new();
static EXTLINK: OnceLock<Regex> = OnceLock::new();
static HTML_TAG: OnceLock<Regex> = OnceLock::new();

/// Removes wiki formatting so that only the prose words remain.
///
/// Reference elements are dropped with their bodies, internal links keep
/// their label, external links keep their label, template braces and pipes
/// are removed, bold/italic quotes and HTML tags are removed.
pub fn strip_markup(s: &str) -> String {
    let s = re(&COMMENT, r"(?s)<!--.*?(-->|$)").replace_all(s, " ");
    let s = re(&REF_ELEMENT, r"(?is)<ref\b[^>]*/>|<ref\b[^>]*>.*?</ref\s*>").replace_all(&s, " ");
    let s = re(&WIKILINK, r"\[\[(?:[^\]|]*\|)?([^\]]*)\]\]").replace_all(&s, "$1");
    let s = re(&EXTLINK, r"\[(?:https?:)?//[^\s\]]+\s*([^\]]*)\]").replace_all(&s, "$1");
    let s = re(&HTML_TAG, r"</?[A-Za-z][^>]*>").replace_all(&s, " ");
    s.replace("{{", " ")
        .replace("}}", " ")
        .replace("'''", "")
        .replace("''", "")
        .replace('|', " ")
}

/// Lowercased alphanumeric tokens of the text after markup stripping.
pub fn normalized_tokens(s: &str) -> Vec<String> {
    strip_markup(s)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Multiset of tokens as a count map.
pub fn token_multiset<'a, I>(tokens: I) -> HashMap<String, usize>
where
    I: IntoIterator<Item = &'a String>,
{
    let mut counts = HashMap::new();
    for t in tokens {
        *counts.entry(t.clone()).or_insert(0) += 1;
    }
    counts
}
