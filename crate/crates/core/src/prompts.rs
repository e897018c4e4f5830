//! Fixed prompt templates for editing, attribute annotation and judgment.

pub const EDITING: &str = include_str!("../prompts/editing.txt");
pub const ANNOTATION: &str = include_str!("../prompts/annotation.txt");
pub const JUDGMENT: &str = include_str!("../prompts/judgment.txt");

/// The editing prompt with both placeholders filled.
pub fn editing(original_paragraph: &str, news_information: &str) -> String {
    EDITING
        .replace("{{Original Content Placeholder}}", original_paragraph.trim())
        .replace("{{News Information Placeholder}}", news_information.trim())
        .trim_end()
        .to_string()
}

pub fn annotation(original: &str, modified: &str, news: &str) -> String {
    ANNOTATION
        .replace("{{Original Paragraph}}", original.trim())
        .replace("{{Modified Paragraph}}", modified.trim())
        .replace("{{News Piece}}", news.trim())
}

/// The judgment prompt followed by the numbered elements and the paragraph.
pub fn judgment(elements: &[&str], paragraph: &str) -> String {
    let mut p = JUDGMENT.trim_end().to_string();
    p.push_str("\n\n### **Elements**\n");
    for (i, e) in elements.iter().enumerate() {
        p.push_str(&format!("{}. {}\n", i + 1, e.trim()));
    }
    p.push_str("\n### **Paragraph**\n");
    p.push_str(paragraph.trim());
    p
}
