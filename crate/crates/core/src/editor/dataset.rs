//! Editor dataset: news-style source content synthesized from human edits,
//! key-fact and commentary annotation, and an entity-disjoint split.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::EditError;
use crate::llm::{LlmBackend, LlmRequest};
use crate::mining::EditRecord;
use crate::prompts;
use crate::revision::Record;
use crate::text::strip_markup;
use crate::wikitext::split_sentences;

const AUGMENT_ATTEMPTS: usize = 3;

pub const AUGMENT_SYSTEM: &str = "You are a news reporter writing short news pieces.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditorExample {
    /// Id of the human edit this example was built from.
    pub id: String,
    pub entity: String,
    pub original_paragraph: String,
    pub edited_paragraph: String,
    pub source_content: String,
    pub key_facts: Vec<String>,
    pub commentary_phrases: Vec<String>,
}

impl Record for EditorExample {
    const KIND: &'static str = "editor_example";
}

fn augment_prompt(record: &EditRecord, source_text: Option<&str>) -> String {
    let added: Vec<String> = record.insertions.iter().map(|s| strip_markup(&s.text).trim().to_string()).collect();
    let mut p = format!(
        "A Wikipedia paragraph about {entity} was updated.\n\n\
Original paragraph:\n{before}\n\nUpdated paragraph:\n{after}\n\nAdded information:\n{added}\n\n",
        entity = record.page_title,
        before = strip_markup(&record.paragraph_before).trim(),
        after = strip_markup(&record.paragraph_after).trim(),
        added = added.join("\n"),
    );
    if let Some(source) = source_text.filter(|s| !s.trim().is_empty()) {
        p.push_str(&format!(
            "The update cited this source. First identify the segment of the source that supports the added information and base the facts on it:\n{}\n\n",
            source.trim()
        ));
    }
    p.push_str(
        "Write a news paragraph of 3 to 4 sentences that reports the added information. Include every key factual \
detail of the update (dates, names, numbers, entities). Also add commentary and subjective remarks, such as opinions, \
speculation or emotional language, that a reporter might use but that do not belong in an encyclopedia. \
Answer with the news paragraph only.",
    );
    p
}

/// Writes a 3-5 sentence news paragraph reporting the edit's factual delta
/// plus distracting commentary. Re-prompts when the length is off.
pub fn augment_source(record: &EditRecord, source_text: Option<&str>, backend: &dyn LlmBackend) -> Result<String, EditError> {
    if record.insertions.is_empty() {
        return Err(EditError::Precondition(format!("edit {} inserts no sentences", record.id())));
    }
    let base = augment_prompt(record, source_text);
    let mut prompt = base.clone();
    let mut got = 0;
    for _ in 0..AUGMENT_ATTEMPTS {
        let raw = backend.invoke(&LlmRequest::new(AUGMENT_SYSTEM, prompt.clone(), 0.0))?;
        let text = crate::llm::strip_code_fence(&raw).trim().to_string();
        got = split_sentences(&text).len();
        if (3..=5).contains(&got) {
            return Ok(text);
        }
        prompt = format!("{base}\n\nYour previous answer had {got} sentences. Write between 3 and 4 sentences.");
    }
    Err(EditError::SentenceCount { got })
}

fn heading_name(line: &str) -> String {
    line.trim()
        .trim_start_matches('#')
        .trim()
        .trim_matches(|c: char| c == '*' || c == ':' || c == '_')
        .trim()
        .to_ascii_lowercase()
}

fn split_phrases(block: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    block
        .split([',', '\n'])
        .map(|p| p.trim().trim_start_matches(['-', '*', '•']).trim().trim_matches('"').trim())
        .filter(|p| !p.is_empty() && !p.eq_ignore_ascii_case("none"))
        .filter(|p| seen.insert(p.to_lowercase()))
        .map(str::to_string)
        .collect()
}

/// Parses the `Key Words` / `Commentary Words` answer format. Both headings
/// are required and at least one key word.
pub fn parse_attributes(response: &str) -> Result<(Vec<String>, Vec<String>), EditError> {
    let parse_err = |message: &str| EditError::Parse { message: message.to_string(), raw: response.to_string() };
    let (mut key, mut commentary): (Option<String>, Option<String>) = (None, None);
    let mut active: Option<&mut String> = None;
    for line in response.lines() {
        match heading_name(line).as_str() {
            "key words" => active = Some(key.insert(String::new())),
            "commentary words" => active = Some(commentary.insert(String::new())),
            _ if line.trim_start().starts_with("###") => active = None,
            _ => {
                if let Some(buf) = active.as_deref_mut() {
                    buf.push_str(line);
                    buf.push('\n');
                }
            }
        }
    }
    let key = key.ok_or_else(|| parse_err("missing Key Words block"))?;
    let commentary = commentary.ok_or_else(|| parse_err("missing Commentary Words block"))?;
    let key_facts = split_phrases(&key);
    if key_facts.is_empty() {
        return Err(parse_err("Key Words block is empty"));
    }
    Ok((key_facts, split_phrases(&commentary)))
}

pub fn annotate_attributes(
    original: &str,
    edited: &str,
    source_content: &str,
    backend: &dyn LlmBackend,
) -> Result<(Vec<String>, Vec<String>), EditError> {
    if [original, edited, source_content].iter().any(|s| s.trim().is_empty()) {
        return Err(EditError::Precondition("original, edited and source content are all required".into()));
    }
    let raw = backend.invoke(&LlmRequest::new("", prompts::annotation(original, edited, source_content), 0.0))?;
    parse_attributes(&raw)
}

fn build_one(record: &EditRecord, source_text: Option<String>, backend: &dyn LlmBackend) -> Result<EditorExample, EditError> {
    let source_content = augment_source(record, source_text.as_deref(), backend)?;
    let original = strip_markup(&record.paragraph_before).trim().to_string();
    let edited = strip_markup(&record.paragraph_after).trim().to_string();
    let (key_facts, commentary_phrases) = annotate_attributes(&original, &edited, &source_content, backend)?;
    Ok(EditorExample {
        id: record.id(),
        entity: record.page_title.clone(),
        original_paragraph: original,
        edited_paragraph: edited,
        source_content,
        key_facts,
        commentary_phrases,
    })
}

/// Builds examples on `workers` threads. Output order follows input order;
/// failures are returned alongside with the edit id.
pub fn build_examples<F>(
    records: &[EditRecord],
    source_text: F,
    backend: &dyn LlmBackend,
    workers: usize,
) -> (Vec<EditorExample>, Vec<(String, EditError)>)
where
    F: Fn(&EditRecord) -> Option<String> + Sync,
{
    let next = Mutex::new(0usize);
    let results: Mutex<Vec<(usize, Result<EditorExample, EditError>)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1) {
            scope.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("work counter poisoned");
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(record) = records.get(i) else { break };
                let r = build_one(record, source_text(record), backend);
                results.lock().expect("results poisoned").push((i, r));
            });
        }
    });
    let mut results = results.into_inner().expect("results poisoned");
    results.sort_by_key(|(i, _)| *i);
    let mut examples = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results {
        match r {
            Ok(e) => examples.push(e),
            Err(e) => {
                warn!(edit = records[i].id(), error = %e, "could not build editor example");
                failures.push((records[i].id(), e));
            }
        }
    }
    (examples, failures)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSize {
    /// Exactly this many test entities.
    Entities(usize),
    /// This fraction of entities, rounded up.
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test: TestSize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<EditorExample>,
    pub test: Vec<EditorExample>,
}

/// Picks test entities at random and one random example from each; all
/// other entities' examples form the training set.
pub fn split_dataset(examples: &[EditorExample], spec: &SplitSpec) -> Result<DatasetSplit, EditError> {
    let mut by_entity: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in examples.iter().enumerate() {
        by_entity.entry(e.entity.as_str()).or_default().push(i);
    }
    let available = by_entity.len();
    let needed = match spec.test {
        TestSize::Entities(n) => n,
        TestSize::Fraction(f) => (f.clamp(0.0, 1.0) * available as f64).ceil() as usize,
    };
    if needed > available {
        return Err(EditError::InsufficientData { needed, available });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut entities: Vec<&str> = by_entity.keys().copied().collect();
    entities.shuffle(&mut rng);
    let mut test_entities: Vec<&str> = entities[..needed].to_vec();
    test_entities.sort_unstable();
    let mut test = Vec::with_capacity(needed);
    for entity in &test_entities {
        let idx = &by_entity[entity];
        test.push(examples[idx[rng.gen_range(0..idx.len())]].clone());
    }
    let test_set: HashSet<&str> = test_entities.into_iter().collect();
    let train = examples.iter().filter(|e| !test_set.contains(e.entity.as_str())).cloned().collect();
    Ok(DatasetSplit { train, test })
}

/// One instruction-tuning record: the filled editing prompt and the target
/// paragraph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

impl From<&EditorExample> for TrainingRecord {
    fn from(e: &EditorExample) -> Self {
        Self {
            instruction: prompts::editing(&e.original_paragraph, &e.source_content),
            input: String::new(),
            output: e.edited_paragraph.clone(),
        }
    }
}

/// Writes one JSON object per line.
pub fn write_training_file(path: &Path, examples: &[EditorExample]) -> Result<(), EditError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in examples {
        serde_json::to_writer(&mut out, &TrainingRecord::from(e)).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
