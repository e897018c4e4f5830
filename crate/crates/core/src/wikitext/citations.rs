use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;

use super::markup::{comment_spans, in_any, ref_elements, template_params, template_spans};

static BARE_URL: OnceLock<Regex> = OnceLock::new();

fn bare_url() -> &'static Regex {
    BARE_URL.get_or_init(|| Regex::new(r#"https?://[^\s|\[\]<>"{}]+"#).expect("static regex"))
}

/// URLs cited in a piece of wikitext, in document order with duplicates kept.
///
/// Inside `<ref>` bodies this takes the `url=` parameter of citation
/// templates and any bare or bracketed URL outside templates. Outside
/// references only citation templates count; plain external links in prose
/// are not citations.
pub fn extract_citations(text: &str) -> Vec<String> {
    let comments = comment_spans(text);
    let refs = ref_elements(text, &comments);
    let mut found: Vec<(usize, String)> = Vec::new();

    for r in &refs {
        if let Some(body) = &r.body {
            urls_in_fragment(text, body.clone(), &comments, &mut found);
        }
    }

    let ref_spans: Vec<Range<usize>> = refs.iter().map(|r| r.span.clone()).collect();
    let mut skip = comments.clone();
    skip.extend(ref_spans.iter().cloned());
    for t in template_spans(text, &skip) {
        if let Some(url) = cite_template_url(&text[t.clone()]) {
            found.push((t.start, url));
        }
    }

    found.sort_by_key(|(pos, _)| *pos);
    found.into_iter().map(|(_, url)| url).collect()
}

fn urls_in_fragment(
    text: &str,
    fragment: Range<usize>,
    comments: &[Range<usize>],
    found: &mut Vec<(usize, String)>,
) {
    let body = &text[fragment.clone()];
    let local_comments: Vec<Range<usize>> = comment_spans(body);
    let templates = template_spans(body, &local_comments);
    for t in &templates {
        if let Some(url) = cite_template_url(&body[t.clone()]) {
            found.push((fragment.start + t.start, url));
        }
    }
    for m in bare_url().find_iter(body) {
        let abs = fragment.start + m.start();
        if in_any(&templates, m.start()) || in_any(&local_comments, m.start()) || in_any(comments, abs) {
            continue;
        }
        let url = m.as_str().trim_end_matches(['.', ',', ';', ':', '!', '?', '\'', ')']);
        found.push((abs, url.to_string()));
    }
}

fn is_citation_template(name: &str) -> bool {
    let name = name.trim().to_ascii_lowercase();
    name.starts_with("cite") || name.starts_with("citation")
}

/// The `url=` parameter of a `{{cite ...}}`/`{{citation ...}}` template.
fn cite_template_url(template: &str) -> Option<String> {
    let inner = template.strip_prefix("{{")?.strip_suffix("}}")?;
    let params = template_params(inner);
    if !is_citation_template(params.first()?) {
        return None;
    }
    params.iter().skip(1).find_map(|p| {
        let (key, value) = p.split_once('=')?;
        if key.trim().eq_ignore_ascii_case("url") {
            let value = value.trim();
            (value.starts_with("http://") || value.starts_with("https://") || value.starts_with("//"))
                .then(|| value.to_string())
        } else {
            None
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_ref() {
        assert_eq!(extract_citations("Fact.<ref>https://x.example/a</ref>"), ["https://x.example/a"]);
    }

    #[test]
    fn no_refs() {
        assert!(extract_citations("Plain prose with [https://x.example link].").is_empty());
    }

    #[test]
    fn templated_bracketed_and_duplicate() {
        let t = concat!(
            "A.<ref name=a>{{cite web |url= https://news.example/1 |archive-url=https://archive.example/1 |title=T}}</ref> ",
            "B.<ref name=a/> C.<ref>[https://blog.example/post Post title]. Retrieved 2024.</ref> ",
            "D.<ref>{{Cite news|title=N|url=https://news.example/1}}</ref>"
        );
        assert_eq!(
            extract_citations(t),
            ["https://news.example/1", "https://blog.example/post", "https://news.example/1"]
        );
    }

    #[test]
    fn cite_template_outside_ref_and_commented_ref() {
        let t = "X {{citation|url=https://c.example}} <!-- <ref>https://hidden.example</ref> -->";
        assert_eq!(extract_citations(t), ["https://c.example"]);
    }
}
