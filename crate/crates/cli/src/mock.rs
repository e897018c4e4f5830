//! A deterministic stand-in for a chat model. It recognises each pipeline
//! prompt and answers it with simple lexical heuristics, so full runs work
//! without network access and can be recorded into cassettes.

use std::collections::{BTreeMap, HashSet};

use sentinel::agent::roles::{AGGREGATOR_SYSTEM, EXTRACTOR_SYSTEM, MAX_CANDIDATES_PER_PAGE, NAVIGATOR_SYSTEM};
use sentinel::criteria::CRITERIA_SYSTEM;
use sentinel::editor::AUGMENT_SYSTEM;
use sentinel::eval::{EntailmentJudge, NormalizedMatchJudge, DECOMPOSE_SYSTEM};
use sentinel::llm::{LlmBackend, LlmError, LlmRequest};
use sentinel::text::{normalized_tokens, strip_markup};
use sentinel::wikitext::split_sentences;

const STOPWORDS: &[&str] = &[
    "about", "after", "also", "been", "before", "being", "between", "both", "could", "during", "each", "from", "have",
    "into", "more", "most", "other", "over", "section", "since", "such", "than", "that", "their", "them", "then",
    "there", "these", "they", "this", "those", "through", "under", "until", "were", "what", "when", "where", "which",
    "while", "with", "would", "facts", "topics",
];

const SUBJECTIVE: &[&str] = &[
    "stunning", "remarkable", "arguably", "believe", "believes", "fans", "surprising", "incredible", "shocking",
    "sensational", "thrilled", "spectacular", "breathtaking", "undoubtedly", "perhaps", "observers", "critics",
    "hopefully", "amazing", "legendary",
];

const COMMENTARY: &[&str] = &[
    "Observers called it a stunning turn of events.",
    "Many fans believe this marks a remarkable new chapter.",
];

pub struct MockBackend {
    model: String,
}

impl MockBackend {
    pub fn new(model: impl Into<String>) -> Self {
        Self { model: model.into() }
    }
}

impl LlmBackend for MockBackend {
    fn model_identifier(&self) -> &str {
        &self.model
    }

    fn invoke(&self, request: &LlmRequest) -> Result<String, LlmError> {
        let p = request.prompt.as_str();
        let answer = match request.system.as_str() {
            CRITERIA_SYSTEM => criteria(p),
            NAVIGATOR_SYSTEM => navigator(p),
            EXTRACTOR_SYSTEM => extractor(p),
            AGGREGATOR_SYSTEM => aggregator(p),
            DECOMPOSE_SYSTEM => decompose(p),
            AUGMENT_SYSTEM => augment(p),
            _ if p.contains("### **Elements**") => judgment(p),
            _ if p.contains("**Commentary Words**") && p.contains("**News Piece**") => annotation(p),
            _ if p.contains("**News Information**") => editing(p),
            _ => return Err(LlmError::Script("mock backend does not recognise this prompt".into())),
        };
        Ok(answer)
    }
}

/// Text between `start` and the next `end` (or the end of input).
fn between<'a>(text: &'a str, start: &str, end: &str) -> &'a str {
    let Some(i) = text.find(start) else { return "" };
    let rest = &text[i + start.len()..];
    rest.find(end).map_or(rest, |j| &rest[..j])
}

fn line_value<'a>(text: &'a str, prefix: &str) -> &'a str {
    text.lines().find_map(|l| l.strip_prefix(prefix)).unwrap_or_default().trim()
}

fn content_words(text: &str, exclude: &HashSet<String>) -> Vec<String> {
    normalized_tokens(text)
        .into_iter()
        .filter(|t| t.chars().count() >= 4 && !STOPWORDS.contains(&t.as_str()) && !exclude.contains(t))
        .collect()
}

fn token_set(text: &str) -> HashSet<String> {
    normalized_tokens(text).into_iter().collect()
}

/// `### heading` blocks with their bodies, in order.
fn heading_blocks(text: &str) -> Vec<(String, String)> {
    let mut blocks: Vec<(String, String)> = Vec::new();
    for line in text.lines() {
        if let Some(h) = line.strip_prefix("### ") {
            blocks.push((h.trim().to_string(), String::new()));
        } else if let Some((_, body)) = blocks.last_mut() {
            body.push_str(line);
            body.push('\n');
        }
    }
    blocks
}

fn last_heading(path: &str) -> &str {
    path.rsplit(" > ").next().unwrap_or(path)
}

fn criteria(p: &str) -> String {
    let title = line_value(p, "Article title: ");
    let title_words = token_set(title);
    let article = p.split_once(&format!("Article title: {title}")).map_or("", |(_, rest)| rest);
    let mut out = String::new();
    for (path, body) in heading_blocks(article) {
        out.push_str(&format!("### {path}\n"));
        if path == "(lead)" {
            out.push_str(&format!("- The most significant facts about {title}, in summary form\n"));
        } else {
            out.push_str(&format!("- Facts about {} of {title}\n", last_heading(&path).to_lowercase()));
        }
        let mut freq: BTreeMap<String, usize> = BTreeMap::new();
        for w in content_words(&body, &title_words) {
            *freq.entry(w).or_default() += 1;
        }
        let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let keywords: Vec<String> = ranked.into_iter().take(8).map(|(w, _)| w).collect();
        if !keywords.is_empty() {
            out.push_str(&format!("- Topics such as {}\n", keywords.join(", ")));
        }
        out.push('\n');
    }
    out.trim_end().to_string()
}

fn criteria_sections(p: &str) -> Vec<(String, String)> {
    let Some(i) = p.find("Section criteria:\n") else { return Vec::new() };
    let rest = &p[i + "Section criteria:\n".len()..];
    let end = ["\n\nUpdates accepted so far:", "\n\nNews source:"]
        .iter()
        .filter_map(|m| rest.find(m))
        .min()
        .unwrap_or(rest.len());
    heading_blocks(&rest[..end])
}

fn navigator(p: &str) -> String {
    let title = line_value(p, "Article: ");
    let sections: Vec<String> = criteria_sections(p)
        .into_iter()
        .map(|(h, _)| h)
        .filter(|h| h != "(lead)")
        .map(|h| last_heading(&h).to_string())
        .collect();
    let issued = between(p, "Queries already issued:\n", "\n\n").lines().filter(|l| l.starts_with("- ")).count();
    let mut query = match (issued, sections.is_empty()) {
        (0, _) | (_, true) => format!("{title} news"),
        (n, false) => format!("{title} {}", sections[(n - 1) % sections.len()]),
    };
    if p.contains("was already issued") {
        query.push_str(" update");
    }
    format!("Query: {query}")
}

fn is_subjective(sentence: &str) -> bool {
    sentence.contains('!') || normalized_tokens(sentence).iter().any(|t| SUBJECTIVE.contains(&t.as_str()))
}

fn extractor(p: &str) -> String {
    let title = line_value(p, "Wikipedia article: ");
    let title_words = token_set(title);
    let content = between(p, "\nContent:\n", "\n\nList at most");
    let sections: Vec<(String, HashSet<String>)> = criteria_sections(p)
        .into_iter()
        .filter(|(h, _)| h != "(lead)")
        .map(|(h, body)| {
            let words = content_words(&format!("{} {body}", last_heading(&h)), &title_words);
            (h, words.into_iter().collect())
        })
        .collect();
    let mut out = Vec::new();
    for paragraph in content.split("\n\n") {
        for s in split_sentences(paragraph) {
            let text = s.text.trim();
            let tokens = token_set(text);
            let on_topic = tokens.iter().any(|t| title_words.contains(t));
            if !on_topic || text.split_whitespace().count() < 6 || !text.ends_with('.') || is_subjective(text) {
                continue;
            }
            let words: HashSet<String> = content_words(text, &title_words).into_iter().collect();
            let mut best: Option<(usize, &str)> = None;
            for (h, kw) in &sections {
                let score = words.intersection(kw).count();
                if score > 0 && best.is_none_or(|(b, _)| score > b) {
                    best = Some((score, h));
                }
            }
            let (section, why) = match best {
                Some((n, h)) => (h.to_string(), format!("shares {n} topic words with the section criteria")),
                None => ("(lead)".to_string(), "general development about the subject".to_string()),
            };
            out.push(format!("Fact: {text}\nSection: {section}\nRationale: {why}"));
            if out.len() == MAX_CANDIDATES_PER_PAGE {
                break;
            }
        }
        if out.len() == MAX_CANDIDATES_PER_PAGE {
            break;
        }
    }
    if out.is_empty() {
        "NONE".to_string()
    } else {
        out.join("\n\n")
    }
}

fn overlap(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    let smaller = a.len().min(b.len());
    if smaller == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / smaller as f64
}

fn aggregator(p: &str) -> String {
    let section = token_set(between(p, "Current section content:\n", "\n\nUpdates accepted so far:"));
    let accepted = between(p, "Updates accepted so far:\n", "\n\nProposed update [");
    let fact = between(between(p, "\n\nProposed update [", "\n\nDecide what"), ":\n", "\n\n");
    let f = token_set(fact);
    if !f.is_empty() && f.intersection(&section).count() as f64 / f.len() as f64 >= 0.9 {
        return "Decision: IGNORE\nReason: The section already states this information.".into();
    }
    for line in accepted.lines() {
        let Some(rest) = line.strip_prefix('[') else { continue };
        let Some((id, rest)) = rest.split_once(']') else { continue };
        let text = rest.trim().split_once(") ").map_or(rest, |(_, t)| t);
        let a = token_set(text);
        if overlap(&f, &a) >= 0.8 {
            return if f.len() > a.len() {
                format!("Decision: REPLACE\nReplaces: {id}\nReason: A more complete version of an accepted update.")
            } else {
                "Decision: IGNORE\nReason: Duplicates an accepted update.".into()
            };
        }
    }
    "Decision: ADD\nReason: New information that fits this section.".into()
}

fn editing(p: &str) -> String {
    let original = between(p, "**Original Paragraph**\n", "\n\n**News Information**").trim();
    let news = between(p, "**News Information**\n", "\n\n**Updated Paragraph**").trim();
    let news = if news.ends_with(['.', '!', '?']) { news.to_string() } else { format!("{news}.") };
    format!("{original} {news}")
}

fn decompose(p: &str) -> String {
    let inserted = between(p, "Inserted sentences:\n", "\n\nRemoved sentences:");
    let mut facts = Vec::new();
    for line in inserted.lines() {
        let Some(s) = line.strip_prefix("- ") else { continue };
        for clause in s.split("; ") {
            let c = clause.trim().trim_end_matches(['.', ';']).trim();
            if c.split_whitespace().count() >= 3 {
                facts.push(format!("- {c}."));
            }
        }
    }
    facts.join("\n")
}

fn judgment(p: &str) -> String {
    let elements = between(p, "### **Elements**\n", "\n\n### **Paragraph**");
    let paragraph = between(p, "### **Paragraph**\n", "\u{0}");
    let mut out = Vec::new();
    for line in elements.lines() {
        let digits = line.chars().take_while(char::is_ascii_digit).count();
        let Some(e) = line[digits..].strip_prefix(". ") else { continue };
        let yes = NormalizedMatchJudge.entails(e, paragraph).unwrap_or(false);
        let thought = if yes { "The paragraph states this." } else { "The paragraph does not state this." };
        out.push(format!("- Element: {e}\n- Thought: {thought}\n- Judgment: {}", if yes { "Yes" } else { "No" }));
    }
    out.join("\n\n")
}

fn augment(p: &str) -> String {
    let facts: Vec<String> = between(p, "Added information:\n", "\n\n")
        .lines()
        .map(|l| strip_markup(l).trim().to_string())
        .filter(|l| !l.is_empty())
        .map(|l| if l.ends_with(['.', '!', '?']) { l } else { format!("{l}.") })
        .take(3)
        .collect();
    let commentary = 3usize.saturating_sub(facts.len()).clamp(1, COMMENTARY.len());
    let mut sentences = facts;
    sentences.extend(COMMENTARY.iter().take(commentary).map(|s| s.to_string()));
    sentences.join(" ")
}

fn annotation(p: &str) -> String {
    let modified = between(p, "**Modified Paragraph**\n", "\n\n**News Piece**");
    let news = between(p, "**News Piece**\n", "\n\nYour Response:");
    let (mut key, mut commentary) = (Vec::new(), Vec::new());
    for s in split_sentences(news) {
        let phrase = s.text.trim().trim_end_matches(['.', '!', '?']).to_string();
        if phrase.is_empty() {
            continue;
        }
        if NormalizedMatchJudge.entails(&phrase, modified).unwrap_or(false) {
            key.push(phrase);
        } else {
            commentary.push(phrase);
        }
    }
    let render = |v: &[String]| if v.is_empty() { "none".to_string() } else { v.join(", ") };
    format!("**Key Words**\n{}\n\n**Commentary Words**\n{}", render(&key), render(&commentary))
}
