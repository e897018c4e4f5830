//! Fixture loaders, builders and brute-force oracles shared by the
//! integration tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::HashSet;
use std::path::PathBuf;

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use sentinel::agent::UpdateCandidate;
use sentinel::editor::{EditSuggestion, EditorExample};
use sentinel::eval::{AtomicFact, EntailmentJudge, EvalError, HumanEditFacts};
use sentinel::mining::EditRecord;
use sentinel::revision::{ArticleSnapshot, RevisionMeta};
use sentinel::wikitext::Sentence;
use sentinel::SectionPath;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

pub fn ts(day: u32, hour: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 2, day, hour, 0, 0).unwrap()
}

pub fn meta(revision_id: u64, timestamp: DateTime<Utc>) -> RevisionMeta {
    RevisionMeta {
        revision_id,
        parent_id: revision_id.checked_sub(1),
        timestamp,
        editor: "Editor".into(),
        comment: String::new(),
        tags: Vec::new(),
    }
}

pub fn snapshot(title: &str, revision_id: u64, timestamp: DateTime<Utc>, wikitext: &str) -> ArticleSnapshot {
    ArticleSnapshot {
        page_title: title.into(),
        revision: meta(revision_id, timestamp),
        wikitext: wikitext.into(),
        fetched_at: timestamp,
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct RevisionPair {
    pub name: String,
    pub category: String,
    pub old: String,
    pub new: String,
    pub section: String,
    pub superficial: bool,
    pub factual: bool,
}

pub fn revision_pairs() -> Vec<RevisionPair> {
    let text = std::fs::read_to_string(fixtures_dir().join("revision_pairs.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// `(file stem, wikitext)` for every article fixture, sorted by name.
pub fn articles() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(fixtures_dir().join("articles"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "wiki"))
        .map(|p| (p.file_stem().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

pub fn citation_fixture() -> (String, Vec<String>) {
    let dir = fixtures_dir().join("citations");
    let text = std::fs::read_to_string(dir.join("refs.wiki")).unwrap();
    let labels = serde_json::from_str(&std::fs::read_to_string(dir.join("refs.json")).unwrap()).unwrap();
    (text, labels)
}

pub fn editor_examples() -> Vec<EditorExample> {
    let text = std::fs::read_to_string(fixtures_dir().join("editor_examples.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Section headings counted from a per-character visibility mask.
///
/// Comments (to end of input when unterminated) are removed from heading
/// lines but must open and close on the line. `<nowiki>`/`<pre>` blocks and
/// balanced `{{...}}` templates hide any line they touch; an unbalanced
/// `{{` is literal text.
pub fn count_headings(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let at = |i: usize, pat: &str| {
        let p: Vec<char> = pat.chars().collect();
        i + p.len() <= n && chars[i..i + p.len()].iter().zip(&p).all(|(a, b)| a.eq_ignore_ascii_case(b))
    };
    let find_from = |i: usize, pat: &str| (i..n).find(|&j| at(j, pat));

    let mut comment = vec![false; n];
    let mut i = 0;
    while i < n {
        if at(i, "<!--") {
            let end = find_from(i + 4, "-->").map(|j| j + 3).unwrap_or(n);
            comment[i..end].iter_mut().for_each(|c| *c = true);
            i = end;
        } else {
            i += 1;
        }
    }

    let mut opaque = vec![false; n];
    let mut i = 0;
    while i < n {
        if comment[i] {
            i += 1;
            continue;
        }
        let tag = ["nowiki", "pre"].into_iter().find(|t| at(i, &format!("<{t}>")) || at(i, &format!("<{t}/>")));
        let Some(tag) = tag else {
            i += 1;
            continue;
        };
        let end = if at(i, &format!("<{tag}/>")) {
            i + tag.len() + 3
        } else {
            find_from(i, &format!("</{tag}>")).map(|j| j + tag.len() + 3).unwrap_or(n)
        };
        opaque[i..end].iter_mut().for_each(|c| *c = true);
        i = end;
    }

    let mut stack = Vec::new();
    let mut i = 0;
    let mut spans = Vec::new();
    while i + 1 < n {
        if comment[i] || opaque[i] {
            i += 1;
            continue;
        }
        if chars[i] == '{' && chars[i + 1] == '{' {
            stack.push(i);
            i += 2;
        } else if chars[i] == '}' && chars[i + 1] == '}' && !stack.is_empty() {
            let open = stack.pop().unwrap();
            if stack.is_empty() {
                spans.push((open, i + 2));
            }
            i += 2;
        } else {
            i += 1;
        }
    }
    for (a, b) in spans {
        opaque[a..b].iter_mut().for_each(|c| *c = true);
    }

    let mut count = 0;
    let mut line_start = 0;
    while line_start < n {
        let line_end = (line_start..n).find(|&j| chars[j] == '\n').unwrap_or(n);
        let probe_end = line_end.max(line_start + 1).min(n);
        let touches = |mask: &[bool]| mask[line_start..probe_end].iter().any(|m| *m);
        let comment_crosses = (line_start > 0 && comment[line_start] && comment[line_start - 1])
            || (line_end < n && comment[line_end]);
        if chars[line_start] == '=' && !touches(&opaque) && !comment_crosses {
            let visible: String = (line_start..line_end).filter(|&j| !comment[j]).map(|j| chars[j]).collect();
            let line = visible.trim_end_matches([' ', '\t', '\r']);
            let lead = line.chars().take_while(|c| *c == '=').count();
            let trail = line.chars().rev().take_while(|c| *c == '=').count();
            let level = lead.min(trail).min(6);
            if level >= 2 && lead < line.chars().count() && !line[level..line.len() - level].trim().is_empty() {
                count += 1;
            }
        }
        line_start = line_end + 1;
    }
    count
}

/// Word-level edit distance with insertions and deletions only, from the
/// textbook LCS table.
pub fn token_change_dp(a: &str, b: &str) -> usize {
    let a: Vec<&str> = a.split_whitespace().collect();
    let b: Vec<&str> = b.split_whitespace().collect();
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] { t[i - 1][j - 1] + 1 } else { t[i - 1][j].max(t[i][j - 1]) };
        }
    }
    a.len() + b.len() - 2 * t[a.len()][b.len()]
}

/// Judge answering from an explicit (fact, text) relation.
pub struct MatrixJudge {
    pub entailed: HashSet<(String, String)>,
}

impl EntailmentJudge for MatrixJudge {
    fn entails(&self, fact: &str, text: &str) -> Result<bool, EvalError> {
        Ok(self.entailed.contains(&(fact.to_string(), text.to_string())))
    }
}

pub fn candidate(id: u64, fact: &str, section: SectionPath) -> UpdateCandidate {
    UpdateCandidate {
        id,
        fact_text: fact.into(),
        target_section: section,
        source_url: format!("https://news.example/{id}"),
        source_title: format!("Story {id}"),
        extraction_rationale: String::new(),
    }
}

pub fn suggestion(id: &str, section: SectionPath, after: &str) -> EditSuggestion {
    EditSuggestion {
        id: id.into(),
        page_title: "Page".into(),
        base_revision: 1,
        section_path: section.clone(),
        paragraph_before: String::new(),
        paragraph_after: after.into(),
        update: candidate(1, after, section),
        citation_url: "https://news.example/1".into(),
        created_at: ts(15, 0),
    }
}

pub fn facts(edit_id: &str, texts: &[&str]) -> Vec<AtomicFact> {
    texts
        .iter()
        .enumerate()
        .map(|(index, t)| AtomicFact { text: t.to_string(), parent_edit_id: edit_id.into(), index })
        .collect()
}

/// A random scoring problem: human edits with facts, agent edits, and the
/// judge's entailment matrix `entailed[h][i][a]`.
pub struct CoverageInstance {
    pub human: Vec<HumanEditFacts>,
    pub agent: Vec<EditSuggestion>,
    pub entailed: Vec<Vec<Vec<bool>>>,
}

fn section_pool() -> Vec<SectionPath> {
    vec![
        SectionPath::lead(),
        SectionPath::new(["History"]),
        SectionPath::new(["History", "Recent"]),
        SectionPath::new(["Career"]),
        SectionPath::page(),
    ]
}

impl CoverageInstance {
    pub fn random(seed: u64, max_edits: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = section_pool();
        let n_h = rng.gen_range(0..=max_edits);
        let n_a = rng.gen_range(0..=max_edits);
        let density: f64 = rng.gen_range(0.0..0.6);
        let agent: Vec<EditSuggestion> = (0..n_a)
            .map(|a| {
                // Agents never edit the page-level pseudo-section.
                let section = pool[rng.gen_range(0..pool.len() - 1)].clone();
                suggestion(&format!("s{a}"), section, &format!("agent paragraph {a}"))
            })
            .collect();
        let mut human = Vec::new();
        let mut entailed = Vec::new();
        for h in 0..n_h {
            let k = rng.gen_range(0..=4);
            let id = format!("h{h}");
            let texts: Vec<String> = (0..k).map(|i| format!("fact {h}.{i}")).collect();
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            human.push(HumanEditFacts { edit_id: id.clone(), section: pool[rng.gen_range(0..pool.len())].clone(), facts: facts(&id, &refs) });
            entailed.push((0..k).map(|_| (0..n_a).map(|_| rng.gen_bool(density)).collect()).collect());
        }
        Self { human, agent, entailed }
    }

    pub fn judge(&self) -> MatrixJudge {
        let mut set = HashSet::new();
        for (h, edit) in self.human.iter().enumerate() {
            for (i, fact) in edit.facts.iter().enumerate() {
                for (a, s) in self.agent.iter().enumerate() {
                    if self.entailed[h][i][a] {
                        set.insert((fact.text.clone(), s.paragraph_after.clone()));
                    }
                }
            }
        }
        MatrixJudge { entailed: set }
    }

    /// Adds one agent edit with its own random judgments.
    pub fn with_extra_agent(&self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let pool = section_pool();
        let a = self.agent.len();
        let mut agent = self.agent.clone();
        agent.push(suggestion(&format!("s{a}"), pool[rng.gen_range(0..pool.len() - 1)].clone(), &format!("agent paragraph {a}")));
        let entailed = self
            .entailed
            .iter()
            .map(|rows| rows.iter().map(|row| {
                let mut row = row.clone();
                row.push(rng.gen_bool(0.5));
                row
            }).collect())
            .collect();
        Self { human: self.human.clone(), agent, entailed }
    }
}

/// Scores computed by direct double loops over edits and facts.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleScores {
    pub c_hard: f64,
    pub c_soft: f64,
    pub c_hard_macro: f64,
    pub c_soft_macro: f64,
    pub s_acc: f64,
    pub per_edit: Vec<(f64, f64)>,
}

pub fn oracle(inst: &CoverageInstance) -> OracleScores {
    let (mut facts_total, mut hard_total, mut soft_total) = (0usize, 0usize, 0usize);
    let mut per_edit = Vec::new();
    let mut accurate = 0usize;
    for (h, edit) in inst.human.iter().enumerate() {
        let k = edit.facts.len();
        if k == 0 {
            continue;
        }
        let (mut hard, mut soft) = (0usize, 0usize);
        let mut any_same_section_hit = false;
        for i in 0..k {
            let mut covered_hard = false;
            let mut covered_soft = false;
            for (a, s) in inst.agent.iter().enumerate() {
                if !inst.entailed[h][i][a] {
                    continue;
                }
                covered_soft = true;
                if s.section_path == edit.section && !edit.section.is_page() {
                    covered_hard = true;
                    any_same_section_hit = true;
                }
            }
            hard += covered_hard as usize;
            soft += covered_soft as usize;
        }
        facts_total += k;
        hard_total += hard;
        soft_total += soft;
        accurate += any_same_section_hit as usize;
        per_edit.push((hard as f64 / k as f64, soft as f64 / k as f64));
    }
    let div = |n: f64, d: usize| if d == 0 { 0.0 } else { n / d as f64 };
    OracleScores {
        c_hard: div(hard_total as f64, facts_total),
        c_soft: div(soft_total as f64, facts_total),
        c_hard_macro: div(per_edit.iter().map(|p| p.0).sum(), per_edit.len()),
        c_soft_macro: div(per_edit.iter().map(|p| p.1).sum(), per_edit.len()),
        s_acc: div(accurate as f64, per_edit.len()),
        per_edit,
    }
}

fn sentence(text: &str, paragraph_index: usize) -> Sentence {
    Sentence { text: text.into(), paragraph_index, char_span: (0, text.len()) }
}

/// An edit record with the given sentence changes; `before`/`after` are
/// the surrounding paragraphs.
pub fn record(
    page: &str,
    rev: u64,
    section: SectionPath,
    removed: &[&str],
    inserted: &[&str],
    before: &str,
    after: &str,
) -> EditRecord {
    EditRecord {
        page_title: page.into(),
        from_revision: meta(rev - 1, ts(1, 0) + chrono::Duration::hours(rev as i64 - 1)),
        to_revision: meta(rev, ts(1, 0) + chrono::Duration::hours(rev as i64)),
        section_path: section,
        insertions: inserted.iter().map(|s| sentence(s, 0)).collect(),
        removals: removed.iter().map(|s| sentence(s, 0)).collect(),
        paragraph_before: before.into(),
        paragraph_after: after.into(),
        new_citation_urls: Vec::new(),
        page_level: false,
    }
}

/// `entities` entities with 1..=4 examples each, sizes drawn from `seed`.
pub fn synthetic_examples(entities: usize, seed: u64) -> Vec<EditorExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for e in 0..entities {
        for k in 0..rng.gen_range(1..=4) {
            out.push(EditorExample {
                id: format!("Entity {e}@{k}"),
                entity: format!("Entity {e}"),
                original_paragraph: format!("Entity {e} is a thing."),
                edited_paragraph: format!("Entity {e} is a thing. It changed in update {k}."),
                source_content: format!("Update {k} about entity {e}."),
                key_facts: vec![format!("update {k}")],
                commentary_phrases: vec![],
            });
        }
    }
    out
}
