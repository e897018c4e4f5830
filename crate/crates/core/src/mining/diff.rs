use std::collections::BTreeSet;

use crate::revision::ArticleSnapshot;
use crate::text::{lcs_diff, normalized_tokens, token_multiset, DiffOp};
use crate::wikitext::{default_splitter, extract_citations, parse_sections, SectionPath, Sentence};

use super::EditRecord;

/// Sentence-level edits between two revisions, one record per changed
/// section.
///
/// When both revisions share the same heading hierarchy each section is
/// diffed against its counterpart; otherwise the whole page is diffed as a
/// single `(page)` section and records are flagged `page_level`.
pub fn diff_revisions(old: &ArticleSnapshot, new: &ArticleSnapshot) -> Vec<EditRecord> {
    let before = parse_sections(&old.wikitext);
    let after = parse_sections(&new.wikitext);

    let make = |path: SectionPath, change: SentenceChange, old_text: &str, new_text: &str, page_level: bool| EditRecord {
        page_title: new.page_title.clone(),
        from_revision: old.revision.clone(),
        to_revision: new.revision.clone(),
        section_path: path,
        insertions: change.insertions,
        removals: change.removals,
        paragraph_before: change.paragraph_before,
        paragraph_after: change.paragraph_after,
        new_citation_urls: new_citations(old_text, new_text),
        page_level,
    };

    if before.hierarchy() == after.hierarchy() {
        before
            .nodes
            .iter()
            .zip(&after.nodes)
            .filter_map(|(a, b)| {
                diff_paragraphs(&a.paragraphs, &b.paragraphs)
                    .map(|change| make(b.path.clone(), change, &a.text, &b.text, false))
            })
            .collect()
    } else {
        let paras = |tree: &crate::wikitext::SectionTree| -> Vec<String> {
            tree.nodes.iter().flat_map(|n| n.paragraphs.iter().cloned()).collect()
        };
        diff_paragraphs(&paras(&before), &paras(&after))
            .map(|change| make(SectionPath::page(), change, &old.wikitext, &new.wikitext, true))
            .into_iter()
            .collect()
    }
}

/// URLs cited in `new_text` that are not cited anywhere in `old_text`,
/// first-occurrence order, without duplicates.
pub fn new_citations(old_text: &str, new_text: &str) -> Vec<String> {
    let old: BTreeSet<String> = extract_citations(old_text).into_iter().collect();
    let mut seen = BTreeSet::new();
    extract_citations(new_text)
        .into_iter()
        .filter(|u| !old.contains(u) && seen.insert(u.clone()))
        .collect()
}

pub(crate) struct SentenceChange {
    pub insertions: Vec<Sentence>,
    pub removals: Vec<Sentence>,
    pub paragraph_before: String,
    pub paragraph_after: String,
}

/// LCS alignment over the sentences of two paragraph lists. Returns `None`
/// when every sentence is matched.
pub(crate) fn diff_paragraphs(before: &[String], after: &[String]) -> Option<SentenceChange> {
    let splitter = default_splitter();
    let split = |paras: &[String]| -> Vec<Sentence> {
        paras.iter().enumerate().flat_map(|(i, p)| splitter.split_indexed(p, i)).collect()
    };
    let a = split(before);
    let b = split(after);
    let a_text: Vec<&str> = a.iter().map(|s| s.text.as_str()).collect();
    let b_text: Vec<&str> = b.iter().map(|s| s.text.as_str()).collect();
    let ops = lcs_diff(&a_text, &b_text);

    let mut removals = Vec::new();
    let mut insertions = Vec::new();
    for op in &ops {
        match *op {
            DiffOp::Delete { a_idx } => removals.push(a[a_idx].clone()),
            DiffOp::Insert { b_idx } => insertions.push(b[b_idx].clone()),
            DiffOp::Equal { .. } => {}
        }
    }
    if removals.is_empty() && insertions.is_empty() {
        return None;
    }

    // Paragraphs touched by the change, extended by the paragraphs they are
    // aligned with on the other side.
    let changed_old: BTreeSet<usize> = removals.iter().map(|s| s.paragraph_index).collect();
    let changed_new: BTreeSet<usize> = insertions.iter().map(|s| s.paragraph_index).collect();
    let mut old_paras = changed_old.clone();
    let mut new_paras = changed_new.clone();
    for op in &ops {
        if let DiffOp::Equal { a_idx, b_idx } = *op {
            let (pa, pb) = (a[a_idx].paragraph_index, b[b_idx].paragraph_index);
            if changed_new.contains(&pb) {
                old_paras.insert(pa);
            }
            if changed_old.contains(&pa) {
                new_paras.insert(pb);
            }
        }
    }
    let join = |paras: &[String], idx: &BTreeSet<usize>| {
        idx.iter().map(|&i| paras[i].as_str()).collect::<Vec<_>>().join("\n\n")
    };

    Some(SentenceChange {
        paragraph_before: join(before, &old_paras),
        paragraph_after: join(after, &new_paras),
        insertions,
        removals,
    })
}

/// True when the edit only touches punctuation, casing, formatting or
/// sentence order: the normalized token multisets of removed and inserted
/// sentences coincide.
pub fn is_superficial(record: &EditRecord) -> bool {
    let tokens = |sentences: &[Sentence]| -> Vec<String> {
        sentences.iter().flat_map(|s| normalized_tokens(&s.text)).collect()
    };
    token_multiset(&tokens(&record.removals)) == token_multiset(&tokens(&record.insertions))
}
