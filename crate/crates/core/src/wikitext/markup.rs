//! Low-level scanners for the wikitext constructs that hide their contents
//! from section and sentence detection.

use std::ops::Range;

/// ASCII case-insensitive search for `needle` in `hay` starting at `from`.
///
/// `needle` must be ASCII, so every match starts on a char boundary.
pub(crate) fn find_ci(hay: &str, from: usize, needle: &str) -> Option<usize> {
    let h = hay.as_bytes();
    let n = needle.as_bytes();
    if n.is_empty() || from > h.len() || h.len() - from < n.len() {
        return None;
    }
    (from..=h.len() - n.len()).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

/// `<!-- ... -->` comments. An unterminated comment runs to the end of input.
pub(crate) fn comment_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut pos = 0;
    while let Some(start) = text[pos..].find("<!--").map(|i| i + pos) {
        let end = text[start + 4..]
            .find("-->")
            .map(|i| start + 4 + i + 3)
            .unwrap_or(text.len());
        spans.push(start..end);
        pos = end;
    }
    spans
}

/// `<tag ...>...</tag>` element spans for a tag name such as `nowiki` or
/// `pre`. Unterminated elements run to the end of input.
pub(crate) fn element_spans(text: &str, tag: &str, skip: &[Range<usize>]) -> Vec<Range<usize>> {
    let open = format!("<{tag}");
    let close = format!("</{tag}");
    let mut spans = Vec::new();
    let mut pos = 0;
    while let Some(start) = find_ci(text, pos, &open) {
        let after = start + open.len();
        if in_any(skip, start) || !is_tag_boundary(text, after) {
            pos = after;
            continue;
        }
        let Some(gt) = text[after..].find('>').map(|i| after + i) else {
            break;
        };
        if text[..gt].ends_with('/') {
            spans.push(start..gt + 1);
            pos = gt + 1;
            continue;
        }
        let end = match find_ci(text, gt + 1, &close) {
            Some(c) => text[c..].find('>').map(|i| c + i + 1).unwrap_or(text.len()),
            None => text.len(),
        };
        spans.push(start..end);
        pos = end;
    }
    spans
}

/// Top-level `{{ ... }}` spans with nesting. Braces inside `skip` ranges are
/// ignored; unterminated templates are not reported.
pub(crate) fn template_spans(text: &str, skip: &[Range<usize>]) -> Vec<Range<usize>> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    let mut i = 0;
    while i + 1 < bytes.len() {
        if let Some(r) = skip.iter().find(|r| r.contains(&i)) {
            i = r.end.max(i + 1);
            continue;
        }
        if bytes[i] == b'{' && bytes[i + 1] == b'{' {
            stack.push(i);
            i += 2;
        } else if bytes[i] == b'}' && bytes[i + 1] == b'}' && !stack.is_empty() {
            let start = stack.pop().expect("non-empty");
            if stack.is_empty() {
                spans.push(start..i + 2);
            }
            i += 2;
        } else {
            i += 1;
        }
    }
    spans
}

/// A `<ref>` element; `body` is `None` for self-closing references.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct RefElement {
    pub span: Range<usize>,
    pub body: Option<Range<usize>>,
}

pub(crate) fn ref_elements(text: &str, skip: &[Range<usize>]) -> Vec<RefElement> {
    let mut refs = Vec::new();
    let mut pos = 0;
    while let Some(start) = find_ci(text, pos, "<ref") {
        let after = start + 4;
        if in_any(skip, start) || !is_tag_boundary(text, after) {
            pos = after;
            continue;
        }
        let Some(gt) = text[after..].find('>').map(|i| after + i) else {
            break;
        };
        if text[..gt].ends_with('/') {
            refs.push(RefElement { span: start..gt + 1, body: None });
            pos = gt + 1;
            continue;
        }
        match find_ci(text, gt + 1, "</ref") {
            Some(close) => {
                let end = text[close..].find('>').map(|i| close + i + 1).unwrap_or(text.len());
                refs.push(RefElement { span: start..end, body: Some(gt + 1..close) });
                pos = end;
            }
            None => {
                refs.push(RefElement { span: start..text.len(), body: Some(gt + 1..text.len()) });
                break;
            }
        }
    }
    refs
}

/// Splits a template body (without the outer braces) on top-level pipes.
pub(crate) fn template_params(inner: &str) -> Vec<&str> {
    let bytes = inner.as_bytes();
    let mut parts = Vec::new();
    let mut depth_brace = 0usize;
    let mut depth_bracket = 0usize;
    let mut last = 0;
    let mut i = 0;
    while i < bytes.len() {
        let two = if i + 1 < bytes.len() { &bytes[i..i + 2] } else { &bytes[i..i + 1] };
        match two {
            b"{{" => {
                depth_brace += 1;
                i += 2;
                continue;
            }
            b"}}" if depth_brace > 0 => {
                depth_brace -= 1;
                i += 2;
                continue;
            }
            b"[[" => {
                depth_bracket += 1;
                i += 2;
                continue;
            }
            b"]]" if depth_bracket > 0 => {
                depth_bracket -= 1;
                i += 2;
                continue;
            }
            _ => {}
        }
        if bytes[i] == b'|' && depth_brace == 0 && depth_bracket == 0 {
            parts.push(&inner[last..i]);
            last = i + 1;
        }
        i += 1;
    }
    parts.push(&inner[last..]);
    parts
}

pub(crate) fn in_any(ranges: &[Range<usize>], pos: usize) -> bool {
    ranges.iter().any(|r| r.contains(&pos))
}

fn is_tag_boundary(text: &str, idx: usize) -> bool {
    matches!(text.as_bytes().get(idx), Some(b' ' | b'\t' | b'\n' | b'>' | b'/'))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_templates_are_one_span() {
        let t = "a {{x|{{y}}|z}} b {{open";
        assert_eq!(template_spans(t, &[]), vec![2..15]);
    }

    #[test]
    fn refs_with_and_without_body() {
        let t = r#"A<ref name="n"/> B<ref>body</ref> C<REF group=x>two</REF>"#;
        let refs = ref_elements(t, &[]);
        assert_eq!(refs.len(), 3);
        assert!(refs[0].body.is_none());
        assert_eq!(&t[refs[1].body.clone().unwrap()], "body");
        assert_eq!(&t[refs[2].body.clone().unwrap()], "two");
    }

    #[test]
    fn params_respect_nesting() {
        assert_eq!(
            template_params("cite web|url=http://a|title=[[a|b]] {{x|y}}"),
            vec!["cite web", "url=http://a", "title=[[a|b]] {{x|y}}"]
        );
    }
}
