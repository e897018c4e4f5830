use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::markup::find_ci;

/// Non-prose constructs that the editor does not touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecialElement {
    Table,
    List,
    Infobox,
    Image,
}

pub fn detect_special_elements(text: &str) -> BTreeSet<SpecialElement> {
    let mut found = BTreeSet::new();
    if text.contains("{|") {
        found.insert(SpecialElement::Table);
    }
    if text.lines().any(|l| l.starts_with('*') || l.starts_with('#')) {
        found.insert(SpecialElement::List);
    }
    if find_ci(text, 0, "{{infobox").is_some() {
        found.insert(SpecialElement::Infobox);
    }
    if find_ci(text, 0, "[[file:").is_some() || find_ci(text, 0, "[[image:").is_some() {
        found.insert(SpecialElement::Image);
    }
    found
}
