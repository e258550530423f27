//! Persistent cross-task memory of tips and shortcuts.
//!
//! On disk the memory is one pretty-printed JSON document:
//!
//! ```text
//! {
//!   "format": "phoneagent-memory/1",
//!   "shortcuts": [
//!     {
//!       "name": "Tap_Type_and_Enter",
//!       "arguments": ["x", "y", "text"],
//!       "description": "...",
//!       "precondition": "...",
//!       "operation_sequence": [
//!         { "name": "Tap", "arguments_map": { "x": "x", "y": "y" } },
//!         { "name": "Type", "arguments_map": { "text": "text" } },
//!         { "name": "Enter", "arguments_map": {} }
//!       ],
//!       "provenance": "seed"
//!     }
//!   ],
//!   "tips": [
//!     { "id": 1, "text": "...", "provenance": { "evolved": "task_1" } }
//!   ]
//! }
//! ```
//!
//! A slot value that is a string names a shortcut argument; `{"literal": v}`
//! is a fixed value. Tip ids are numbered densely from 1. Shortcut names are
//! unique and every shortcut must pass validation to load.

use std::io::ErrorKind;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::shortcut::{validate_shortcut, OperationTemplate, Shortcut, ValidatedShortcut, ValidationError};

const FORMAT_TAG: &str = "phoneagent-memory/1";

/// Where an entry came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Seed,
    /// Added by experience reflection after the named task.
    Evolved(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tip {
    pub id: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TipEntry {
    pub tip: Tip,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShortcutEntry {
    pub shortcut: ValidatedShortcut,
    pub provenance: Provenance,
}

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("memory file not found: {0}")]
    NotFound(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed memory file: {0}")]
    Decode(#[from] serde_json::Error),
    #[error("unsupported memory format `{0}`")]
    Format(String),
    #[error("duplicate shortcut name `{0}`")]
    DuplicateShortcut(String),
    #[error("tip numbering: expected id {expected}, found {found}")]
    TipNumbering { expected: usize, found: usize },
    #[error("tip {0} has empty text")]
    EmptyTip(usize),
    #[error("invalid shortcut `{name}`: {source}")]
    InvalidShortcut {
        name: String,
        #[source]
        source: ValidationError,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LongTermMemory {
    shortcuts: Vec<ShortcutEntry>,
    tips: Vec<TipEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShortcutRecord {
    name: String,
    arguments: Vec<String>,
    description: String,
    precondition: String,
    operation_sequence: Vec<OperationTemplate>,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TipRecord {
    id: usize,
    text: String,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemoryFile {
    format: String,
    shortcuts: Vec<ShortcutRecord>,
    tips: Vec<TipRecord>,
}

impl LongTermMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn shortcuts(&self) -> &[ShortcutEntry] {
        &self.shortcuts
    }

    pub fn tips(&self) -> &[TipEntry] {
        &self.tips
    }

    pub fn shortcut(&self, name: &str) -> Option<&ValidatedShortcut> {
        self.shortcuts
            .iter()
            .find(|e| e.shortcut.name == name)
            .map(|e| &e.shortcut)
    }

    pub fn is_empty(&self) -> bool {
        self.shortcuts.is_empty() && self.tips.is_empty()
    }

    pub fn admit_shortcut(&mut self, shortcut: ValidatedShortcut, provenance: Provenance) -> Result<(), MemoryError> {
        if self.shortcut(&shortcut.name).is_some() {
            return Err(MemoryError::DuplicateShortcut(shortcut.name.clone()));
        }
        self.shortcuts.push(ShortcutEntry { shortcut, provenance });
        Ok(())
    }

    pub fn add_tip(&mut self, text: impl Into<String>, provenance: Provenance) {
        let id = self.tips.len() + 1;
        self.tips.push(TipEntry {
            tip: Tip { id, text: text.into() },
            provenance,
        });
    }

    /// Replaces the tip list wholesale, renumbering from 1. Texts already in
    /// memory keep their provenance; new ones get `fresh`.
    pub fn replace_tips(&mut self, texts: Vec<String>, fresh: Provenance) {
        let old = std::mem::take(&mut self.tips);
        for text in texts {
            let provenance = old
                .iter()
                .find(|e| e.tip.text == text)
                .map(|e| e.provenance.clone())
                .unwrap_or_else(|| fresh.clone());
            self.add_tip(text, provenance);
        }
    }

    /// Restricts the memory to the named tips and shortcuts, keeping order.
    pub fn subset(&self, tip_ids: &[usize], shortcut_names: &[String]) -> LongTermMemory {
        LongTermMemory {
            shortcuts: self
                .shortcuts
                .iter()
                .filter(|e| shortcut_names.contains(&e.shortcut.name))
                .cloned()
                .collect(),
            tips: self
                .tips
                .iter()
                .filter(|e| tip_ids.contains(&e.tip.id))
                .cloned()
                .collect(),
        }
    }

    pub fn to_file_string(&self) -> String {
        let file = MemoryFile {
            format: FORMAT_TAG.to_string(),
            shortcuts: self
                .shortcuts
                .iter()
                .map(|e| {
                    let s: &Shortcut = &e.shortcut;
                    ShortcutRecord {
                        name: s.name.clone(),
                        arguments: s.arguments.clone(),
                        description: s.description.clone(),
                        precondition: s.precondition.clone(),
                        operation_sequence: s.operation_sequence.clone(),
                        provenance: e.provenance.clone(),
                    }
                })
                .collect(),
            tips: self
                .tips
                .iter()
                .map(|e| TipRecord {
                    id: e.tip.id,
                    text: e.tip.text.clone(),
                    provenance: e.provenance.clone(),
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("memory serializes");
        out.push('\n');
        out
    }

    pub fn from_file_str(text: &str) -> Result<Self, MemoryError> {
        let file: MemoryFile = serde_json::from_str(text)?;
        if file.format != FORMAT_TAG {
            return Err(MemoryError::Format(file.format));
        }
        let mut memory = LongTermMemory::new();
        for record in file.shortcuts {
            let name = record.name.clone();
            let validated = validate_shortcut(Shortcut {
                name: record.name,
                arguments: record.arguments,
                description: record.description,
                precondition: record.precondition,
                operation_sequence: record.operation_sequence,
            })
            .map_err(|source| MemoryError::InvalidShortcut {
                name: name.clone(),
                source,
            })?;
            memory.admit_shortcut(validated, record.provenance)?;
        }
        for (i, record) in file.tips.into_iter().enumerate() {
            if record.id != i + 1 {
                return Err(MemoryError::TipNumbering {
                    expected: i + 1,
                    found: record.id,
                });
            }
            if record.text.trim().is_empty() {
                return Err(MemoryError::EmptyTip(record.id));
            }
            memory.add_tip(record.text, record.provenance);
        }
        Ok(memory)
    }

    /// SHA-256 of the serialized form, hex encoded.
    pub fn content_hash(&self) -> String {
        hex_digest(self.to_file_string().as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_memory(memory: &LongTermMemory, path: &Path) -> Result<(), MemoryError> {
    std::fs::write(path, memory.to_file_string()).map_err(|source| MemoryError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_memory(path: &Path) -> Result<LongTermMemory, MemoryError> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == ErrorKind::NotFound {
            MemoryError::NotFound(path.display().to_string())
        } else {
            MemoryError::Io {
                path: path.display().to_string(),
                source,
            }
        }
    })?;
    LongTermMemory::from_file_str(&text)
}
