//! Labeled-section response grammar shared by every agent.
//!
//! ```text
//! response := preamble? section+
//! section  := LABEL ":" first-line-text NEWLINE continuation*
//! ```
//!
//! A line opens a section when it starts with one of the agent's labels
//! followed by a colon. Continuation lines belong to the open section. Text
//! before the first section is ignored; values are trimmed. A label may
//! appear at most once.

use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GrammarError {
    #[error("section {0} is missing")]
    Missing(&'static str),
    #[error("section {0} appears more than once")]
    Duplicate(&'static str),
    #[error("section {section}: {message}")]
    Invalid { section: &'static str, message: String },
}

/// Parsed sections of one response, keyed by label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Sections {
    values: BTreeMap<&'static str, String>,
}

impl Sections {
    pub fn get(&self, label: &'static str) -> Option<&str> {
        self.values.get(label).map(String::as_str)
    }

    pub fn require(&self, label: &'static str) -> Result<&str, GrammarError> {
        self.get(label).ok_or(GrammarError::Missing(label))
    }

    pub fn or_empty(&self, label: &'static str) -> String {
        self.get(label).unwrap_or_default().to_string()
    }
}

fn opening_label(line: &str, labels: &[&'static str]) -> Option<(&'static str, usize)> {
    labels.iter().find_map(|&label| {
        let rest = line.strip_prefix(label)?;
        rest.starts_with(':').then_some((label, label.len() + 1))
    })
}

pub fn parse_sections(text: &str, labels: &[&'static str]) -> Result<Sections, GrammarError> {
    let mut values: BTreeMap<&'static str, String> = BTreeMap::new();
    let mut open: Option<&'static str> = None;
    for line in text.lines() {
        if let Some((label, skip)) = opening_label(line, labels) {
            if values.contains_key(label) {
                return Err(GrammarError::Duplicate(label));
            }
            values.insert(label, line[skip..].to_string());
            open = Some(label);
        } else if let Some(label) = open {
            let value = values.get_mut(label).expect("open section exists");
            value.push('\n');
            value.push_str(line);
        }
    }
    for value in values.values_mut() {
        *value = value.trim().to_string();
    }
    Ok(Sections { values })
}

/// Inverse of [`parse_sections`] for trimmed values whose lines never start
/// with a section label.
pub fn format_sections(sections: &[(&str, &str)]) -> String {
    let mut out = String::new();
    for (label, value) in sections {
        out.push_str(label);
        out.push(':');
        if !value.is_empty() {
            out.push(' ');
            out.push_str(value);
        }
        out.push('\n');
    }
    out
}
