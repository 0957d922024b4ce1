//! The shared scratchpad: an append-only, label-keyed sequence of agent
//! contributions with a canonical text rendering.
//!
//! The wire format is one section per entry: a `[Header]` line followed by
//! the section text, sections separated by a single blank line. Parsing is
//! the exact inverse of rendering for any scratchpad whose section texts do
//! not themselves contain a canonical header line; such texts are rejected
//! at append time so the round trip holds unconditionally.

use crate::label::{AgentLabel, ALL_LABELS};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScratchpadError {
    #[error("writing task is empty")]
    EmptyTask,
    #[error("entry text for {0} is empty")]
    EmptyEntry(AgentLabel),
    #[error("label {0} already present in scratchpad")]
    DuplicateLabel(AgentLabel),
    #[error("scratchpad is empty")]
    EmptyScratchpad,
    #[error("first scratchpad entry must be the writing task")]
    MissingTask,
    #[error("entry text for {label} contains the canonical header line {header:?}")]
    HeaderCollision { label: AgentLabel, header: String },
    #[error("line {line} is not a recognized section header: {text:?}")]
    UnknownHeader { line: usize, text: String },
}

/// One labeled contribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScratchpadEntry {
    pub label: AgentLabel,
    text: String,
}

impl ScratchpadEntry {
    /// Build an entry, normalizing the text (trailing whitespace stripped
    /// per line, outer blank lines dropped) and rejecting empty text or text
    /// containing a canonical header line.
    pub fn new(label: AgentLabel, text: &str) -> Result<Self, ScratchpadError> {
        let text = normalize(text);
        if text.is_empty() {
            return Err(ScratchpadError::EmptyEntry(label));
        }
        for line in text.lines() {
            if let Some(header) = as_canonical_header(line) {
                return Err(ScratchpadError::HeaderCollision {
                    label,
                    header: header.header().to_string(),
                });
            }
        }
        Ok(Self { label, text })
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// Strip trailing whitespace per line, then drop leading/trailing blank lines.
fn normalize(text: &str) -> String {
    let lines: Vec<&str> = text.lines().map(|l| l.trim_end()).collect();
    let start = lines.iter().position(|l| !l.is_empty());
    let Some(start) = start else {
        return String::new();
    };
    let end = lines.iter().rposition(|l| !l.is_empty()).unwrap();
    lines[start..=end].join("\n")
}

/// If `line` is exactly `[<canonical header>]`, return the matching label.
fn as_canonical_header(line: &str) -> Option<AgentLabel> {
    let inner = line.strip_prefix('[')?.strip_suffix(']')?;
    ALL_LABELS.iter().copied().find(|l| l.header() == inner)
}

/// Append-only shared state of an orchestrated run.
///
/// Scratchpads are immutable values: `append` returns a new scratchpad and
/// leaves the receiver untouched.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scratchpad {
    entries: Vec<ScratchpadEntry>,
}

impl Scratchpad {
    /// A scratchpad with no entries. Only a `Task` entry may be appended to it.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Initialize with the writing task as the sole entry.
    pub fn init(task: &str) -> Result<Self, ScratchpadError> {
        if task.trim().is_empty() {
            return Err(ScratchpadError::EmptyTask);
        }
        let entry = ScratchpadEntry::new(AgentLabel::Task, task)?;
        Ok(Self {
            entries: vec![entry],
        })
    }

    /// Return a new scratchpad with `entry` appended.
    pub fn append(&self, entry: ScratchpadEntry) -> Result<Self, ScratchpadError> {
        if self.contains(entry.label) {
            return Err(ScratchpadError::DuplicateLabel(entry.label));
        }
        if self.entries.is_empty() && entry.label != AgentLabel::Task {
            return Err(ScratchpadError::MissingTask);
        }
        let mut entries = self.entries.clone();
        entries.push(entry);
        Ok(Self { entries })
    }

    /// Convenience for `append(ScratchpadEntry::new(label, text)?)`.
    pub fn append_text(&self, label: AgentLabel, text: &str) -> Result<Self, ScratchpadError> {
        self.append(ScratchpadEntry::new(label, text)?)
    }

    pub fn entries(&self) -> &[ScratchpadEntry] {
        &self.entries
    }

    pub fn labels(&self) -> impl Iterator<Item = AgentLabel> + '_ {
        self.entries.iter().map(|e| e.label)
    }

    pub fn contains(&self, label: AgentLabel) -> bool {
        self.entries.iter().any(|e| e.label == label)
    }

    pub fn get(&self, label: AgentLabel) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.label == label)
            .map(|e| e.text.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// True if the scratchpad starts with the writing task.
    pub fn has_task(&self) -> bool {
        self.entries.first().map(|e| e.label) == Some(AgentLabel::Task)
    }

    /// Canonical text rendering: `[Header]` line, section text, one blank
    /// line between sections, no trailing whitespace.
    pub fn render(&self) -> Result<String, ScratchpadError> {
        if self.entries.is_empty() {
            return Err(ScratchpadError::EmptyScratchpad);
        }
        let sections: Vec<String> = self
            .entries
            .iter()
            .map(|e| format!("[{}]\n{}", e.label.header(), e.text))
            .collect();
        Ok(sections.join("\n\n"))
    }

    /// Parse the canonical rendering back into a scratchpad.
    ///
    /// Section text is everything between consecutive canonical header
    /// lines; bracketed lines outside the canonical set are ordinary text,
    /// except on the first line, which must be a recognized header.
    pub fn parse(text: &str) -> Result<Self, ScratchpadError> {
        let lines: Vec<&str> = text.lines().collect();
        let first = lines.first().copied().unwrap_or("");
        let Some(first_label) = as_canonical_header(first.trim_end()) else {
            return Err(ScratchpadError::UnknownHeader {
                line: 1,
                text: first.to_string(),
            });
        };
        if first_label != AgentLabel::Task {
            return Err(ScratchpadError::MissingTask);
        }

        let mut pad = Scratchpad::empty();
        let mut label = first_label;
        let mut body: Vec<&str> = Vec::new();
        for line in &lines[1..] {
            if let Some(next) = as_canonical_header(line.trim_end()) {
                pad = pad.append_text(label, &body.join("\n"))?;
                label = next;
                body.clear();
            } else {
                body.push(line);
            }
        }
        pad = pad.append_text(label, &body.join("\n"))?;
        Ok(pad)
    }
}
