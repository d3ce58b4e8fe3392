//! Plain-text `key = value` documents with `[section]` headers.
//!
//! `#` starts a comment (whole line or after a value). Keys are unique per
//! section; every problem is reported with its line number.

use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    pub entries: Vec<Entry>,
}

impl Document {
    pub fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.section == section && e.key == key)
    }
}

/// Parse `text` into the well-formed entries plus one message per malformed
/// line or duplicate key.
pub fn parse_lenient(text: &str) -> (Document, Vec<String>) {
    let mut doc = Document::default();
    let mut errors = Vec::new();
    let mut section = String::new();
    let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            match rest.strip_suffix(']') {
                Some(name) if !name.trim().is_empty() => section = name.trim().to_string(),
                _ => errors.push(format!("line {line}: malformed section header `{content}`")),
            }
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            errors.push(format!("line {line}: expected `key = value`, found `{content}`"));
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            errors.push(format!("line {line}: empty key"));
            continue;
        }
        if section.is_empty() {
            errors.push(format!("line {line}: key `{k}` appears before any [section]"));
            continue;
        }
        if let Some(first) = seen.insert((section.clone(), k.to_string()), line) {
            errors.push(format!("line {line}: duplicate key `{section}.{k}` (first set on line {first})"));
            continue;
        }
        doc.entries.push(Entry {
            section: section.clone(),
            key: k.to_string(),
            value: v.to_string(),
            line,
        });
    }
    (doc, errors)
}

pub fn parse_document(text: &str) -> Result<Document, Vec<String>> {
    match parse_lenient(text) {
        (doc, e) if e.is_empty() => Ok(doc),
        (_, e) => Err(e),
    }
}
