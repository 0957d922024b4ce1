//! Agent specifications and prompt rendering.
//!
//! Each agent is a prompt template over the current scratchpad. Planning
//! agents list the scratchpad identifiers flat; writing agents group them
//! into the content plan and the previous parts of the story. Rendering is
//! a pure function of (agent, scratchpad) and is pinned by golden-file
//! tests.

use crate::label::{AgentLabel, PLANNING_LABELS, WRITING_SECTION_LABELS};
use crate::scratchpad::Scratchpad;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("agent {0} has already contributed to the scratchpad")]
    AgentAlreadyRan(AgentLabel),
    #[error("scratchpad does not start with the writing task")]
    MissingTask,
    #[error("no agent is registered for label {0}")]
    NoSuchAgent(AgentLabel),
    #[error("failed to read template {name} from {path}: {source}")]
    TemplateIo {
        name: &'static str,
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Scratchpad(#[from] crate::scratchpad::ScratchpadError),
}

/// Agent role: planners write only to the scratchpad, writers also emit a
/// piece of the final story.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Planning,
    Writing,
}

/// How scratchpad identifiers are phrased in a prompt preamble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentifierStyle {
    /// "a Creative Writing Task, the Central Conflict, and the Character Descriptions"
    Flat,
    /// "a Creative Writing Task, the Content Plan (...), and the Previous Parts of the Story (...)"
    Grouped,
}

/// A specialized agent: label, kind, template, and optional backend route.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub label: AgentLabel,
    pub kind: AgentKind,
    pub template: &'static str,
    /// Backend profile name; `None` defers to the orchestrator config.
    pub backend_route: Option<String>,
}

/// The ten agents of the pipeline, in canonical order.
pub fn agent_registry() -> Vec<AgentSpec> {
    let mut agents = Vec::with_capacity(10);
    for label in PLANNING_LABELS {
        agents.push(AgentSpec {
            label,
            kind: AgentKind::Planning,
            template: planning_template_name(label),
            backend_route: None,
        });
    }
    for label in WRITING_SECTION_LABELS {
        agents.push(AgentSpec {
            label,
            kind: AgentKind::Writing,
            template: "writing",
            backend_route: None,
        });
    }
    agents.push(AgentSpec {
        label: AgentLabel::Finalizer,
        kind: AgentKind::Writing,
        template: "finalizer",
        backend_route: None,
    });
    agents
}

/// Look up the registry entry for a label.
pub fn agent_spec(label: AgentLabel) -> Result<AgentSpec, PromptError> {
    agent_registry()
        .into_iter()
        .find(|a| a.label == label)
        .ok_or(PromptError::NoSuchAgent(label))
}

/// Kind of the agent behind a label, if it has one.
pub fn agent_kind(label: AgentLabel) -> Option<AgentKind> {
    if label.is_planning() {
        Some(AgentKind::Planning)
    } else if label.is_writing_section() || label == AgentLabel::Finalizer {
        Some(AgentKind::Writing)
    } else {
        None
    }
}

fn planning_template_name(label: AgentLabel) -> &'static str {
    match label {
        AgentLabel::Conflict => "conflict",
        AgentLabel::Character => "character",
        AgentLabel::Setting => "setting",
        AgentLabel::Plot => "plot",
        _ => unreachable!("not a planning label"),
    }
}

const TEMPLATE_NAMES: [&str; 10] = [
    "conflict",
    "character",
    "setting",
    "plot",
    "writing",
    "writing_continuation",
    "writing_focus",
    "finalizer",
    "story_split",
    "judge",
];

/// The prompt template resources. Defaults are compiled in; a directory of
/// files with the same names can override them for experimentation.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    texts: Vec<(&'static str, String)>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let texts = vec![
            ("conflict", include_str!("../resources/templates/conflict.txt").to_string()),
            ("character", include_str!("../resources/templates/character.txt").to_string()),
            ("setting", include_str!("../resources/templates/setting.txt").to_string()),
            ("plot", include_str!("../resources/templates/plot.txt").to_string()),
            ("writing", include_str!("../resources/templates/writing.txt").to_string()),
            (
                "writing_continuation",
                include_str!("../resources/templates/writing_continuation.txt").to_string(),
            ),
            ("writing_focus", include_str!("../resources/templates/writing_focus.txt").to_string()),
            ("finalizer", include_str!("../resources/templates/finalizer.txt").to_string()),
            ("story_split", include_str!("../resources/templates/story_split.txt").to_string()),
            ("judge", include_str!("../resources/templates/judge.txt").to_string()),
        ];
        Self { texts }
    }
}

impl TemplateSet {
    /// Load every template from `<dir>/<name>.txt`, replacing the defaults.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut texts = Vec::with_capacity(TEMPLATE_NAMES.len());
        for name in TEMPLATE_NAMES {
            let path = dir.join(format!("{name}.txt"));
            let text = std::fs::read_to_string(&path).map_err(|source| PromptError::TemplateIo {
                name,
                path: path.display().to_string(),
                source,
            })?;
            texts.push((name, text));
        }
        Ok(Self { texts })
    }

    pub fn get(&self, name: &str) -> &str {
        self.texts
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.as_str())
            .expect("template names are fixed at compile time")
    }
}

impl fmt::Display for IdentifierStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IdentifierStyle::Flat => f.write_str("flat"),
            IdentifierStyle::Grouped => f.write_str("grouped"),
        }
    }
}

/// Phrase a label as a list element: the task and the gold response take the
/// indefinite article, agent sections the definite one.
fn identifier_element(label: AgentLabel) -> String {
    match label {
        AgentLabel::Task => format!("a {}", label.header()),
        AgentLabel::GoldResponse => format!("a {}", label.header()),
        _ => format!("the {}", label.header()),
    }
}

/// Join list elements with an Oxford comma.
fn oxford_join(parts: &[String]) -> String {
    match parts {
        [] => String::new(),
        [only] => only.clone(),
        [first, second] => format!("{first} and {second}"),
        _ => {
            let (last, head) = parts.split_last().unwrap();
            format!("{}, and {last}", head.join(", "))
        }
    }
}

/// Describe the scratchpad contents for a prompt preamble.
pub fn identifiers_phrase(s: &Scratchpad, style: IdentifierStyle) -> String {
    match style {
        IdentifierStyle::Flat => {
            let parts: Vec<String> = s.labels().map(identifier_element).collect();
            oxford_join(&parts)
        }
        IdentifierStyle::Grouped => {
            let mut parts = Vec::new();
            if s.contains(AgentLabel::Task) {
                parts.push(identifier_element(AgentLabel::Task));
            }
            let plans: Vec<&str> = s
                .labels()
                .filter(|l| l.is_planning())
                .map(|l| l.header())
                .collect();
            if !plans.is_empty() {
                parts.push(format!("the Content Plan ({})", plans.join(", ")));
            }
            let sections: Vec<&str> = s
                .labels()
                .filter(|l| l.is_writing_section() || *l == AgentLabel::Finalizer)
                .map(|l| l.header())
                .collect();
            if !sections.is_empty() {
                parts.push(format!(
                    "the Previous Parts of the Story ({})",
                    sections.join(", ")
                ));
            }
            if s.contains(AgentLabel::GoldResponse) {
                parts.push(identifier_element(AgentLabel::GoldResponse));
            }
            oxford_join(&parts)
        }
    }
}

/// Render the prompt for `label` over scratchpad `s`.
///
/// Writing agents include the continuation clause iff a story section is
/// already in the scratchpad, and the focus clause unless they write the
/// ending. Every prompt ends with the rendered scratchpad.
pub fn render_agent_prompt(
    label: AgentLabel,
    s: &Scratchpad,
    templates: &TemplateSet,
) -> Result<String, PromptError> {
    let spec = agent_spec(label)?;
    if s.contains(label) {
        return Err(PromptError::AgentAlreadyRan(label));
    }
    if !s.has_task() {
        return Err(PromptError::MissingTask);
    }
    let scratchpad_text = s.render()?;

    let prompt = match spec.kind {
        AgentKind::Planning => templates
            .get(spec.template)
            .replace("<identifiers>", &identifiers_phrase(s, IdentifierStyle::Flat))
            .replace("<scratchpad>", &scratchpad_text),
        AgentKind::Writing => {
            let identifiers = identifiers_phrase(s, IdentifierStyle::Grouped);
            if label == AgentLabel::Finalizer {
                templates
                    .get(spec.template)
                    .replace("<identifiers>", &identifiers)
                    .replace("<scratchpad>", &scratchpad_text)
            } else {
                let section = label.header();
                let mut paragraphs = vec![templates
                    .get("writing")
                    .trim_end()
                    .replace("<identifiers>", &identifiers)
                    .replace("<section>", section)];
                let has_prior_section = s.labels().any(|l| l.is_writing_section());
                if has_prior_section {
                    paragraphs.push(templates.get("writing_continuation").trim_end().to_string());
                }
                if label != AgentLabel::Resolution {
                    paragraphs.push(
                        templates
                            .get("writing_focus")
                            .trim_end()
                            .replace("<section>", section),
                    );
                }
                paragraphs.push(scratchpad_text);
                paragraphs.join("\n\n")
            }
        }
    };
    Ok(prompt.trim_end().to_string())
}
