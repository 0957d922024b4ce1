//! Agent labels and their canonical scratchpad headers.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Identifier of a scratchpad contributor.
///
/// `Task` holds the writing prompt, `GoldResponse` a human-written story used
/// when back-translating training data. The remaining labels name the ten
/// agents of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AgentLabel {
    Task,
    Conflict,
    Character,
    Setting,
    Plot,
    Exposition,
    RisingAction,
    Climax,
    FallingAction,
    Resolution,
    Finalizer,
    GoldResponse,
}

/// All labels in canonical scratchpad order.
pub const ALL_LABELS: [AgentLabel; 12] = [
    AgentLabel::Task,
    AgentLabel::Conflict,
    AgentLabel::Character,
    AgentLabel::Setting,
    AgentLabel::Plot,
    AgentLabel::Exposition,
    AgentLabel::RisingAction,
    AgentLabel::Climax,
    AgentLabel::FallingAction,
    AgentLabel::Resolution,
    AgentLabel::Finalizer,
    AgentLabel::GoldResponse,
];

/// The four planning agents, in orchestration order.
pub const PLANNING_LABELS: [AgentLabel; 4] = [
    AgentLabel::Conflict,
    AgentLabel::Character,
    AgentLabel::Setting,
    AgentLabel::Plot,
];

/// The five section-writing agents, in narrative order.
pub const WRITING_SECTION_LABELS: [AgentLabel; 5] = [
    AgentLabel::Exposition,
    AgentLabel::RisingAction,
    AgentLabel::Climax,
    AgentLabel::FallingAction,
    AgentLabel::Resolution,
];

impl AgentLabel {
    /// Canonical display header, as it appears in bracketed scratchpad
    /// section lines.
    pub fn header(self) -> &'static str {
        match self {
            AgentLabel::Task => "Creative Writing Task",
            AgentLabel::Conflict => "Central Conflict",
            AgentLabel::Character => "Character Descriptions",
            AgentLabel::Setting => "Setting",
            AgentLabel::Plot => "Key Plot Points",
            AgentLabel::Exposition => "Exposition",
            AgentLabel::RisingAction => "Rising Action",
            AgentLabel::Climax => "Climax",
            AgentLabel::FallingAction => "Falling Action",
            AgentLabel::Resolution => "Resolution",
            AgentLabel::Finalizer => "Final Story",
            AgentLabel::GoldResponse => "User-Written Response",
        }
    }

    /// Stable upper-case name, used in traces, training files, and mock
    /// backend scripts.
    pub fn name(self) -> &'static str {
        match self {
            AgentLabel::Task => "TASK",
            AgentLabel::Conflict => "CONFLICT",
            AgentLabel::Character => "CHARACTER",
            AgentLabel::Setting => "SETTING",
            AgentLabel::Plot => "PLOT",
            AgentLabel::Exposition => "EXPOSITION",
            AgentLabel::RisingAction => "RISING_ACTION",
            AgentLabel::Climax => "CLIMAX",
            AgentLabel::FallingAction => "FALLING_ACTION",
            AgentLabel::Resolution => "RESOLUTION",
            AgentLabel::Finalizer => "FINALIZER",
            AgentLabel::GoldResponse => "GOLD_RESPONSE",
        }
    }

    /// Look a label up by its display header.
    pub fn from_header(header: &str) -> Option<Self> {
        ALL_LABELS.iter().copied().find(|l| l.header() == header)
    }

    /// True for the four content-planning agents.
    pub fn is_planning(self) -> bool {
        PLANNING_LABELS.contains(&self)
    }

    /// True for the five narrative-section agents.
    pub fn is_writing_section(self) -> bool {
        WRITING_SECTION_LABELS.contains(&self)
    }
}

impl fmt::Display for AgentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_LABELS
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| format!("unknown agent label: {s}"))
    }
}
