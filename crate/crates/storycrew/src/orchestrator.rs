//! The deterministic orchestrator: sequences agents per variant, threads the
//! scratchpad through each call, and assembles the final story from the
//! writing agents' outputs.

use crate::agents::{agent_kind, render_agent_prompt, AgentKind, TemplateSet};
use crate::backend::{BackendError, BackendRegistry, GenerationRequest, TextBackend};
use crate::label::{AgentLabel, PLANNING_LABELS, WRITING_SECTION_LABELS};
use crate::scratchpad::{Scratchpad, ScratchpadError};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

/// Separator between story sections in the assembled output.
pub const STORY_SEPARATOR: &str = "\n\n";

/// Which agents a run engages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    E2e,
    Plan,
    Write,
    PlanWrite,
}

pub const ALL_VARIANTS: [Variant; 4] = [Variant::E2e, Variant::Plan, Variant::Write, Variant::PlanWrite];

impl Variant {
    /// The fixed agent call order of this variant.
    pub fn sequence(self) -> &'static [AgentLabel] {
        const PLAN_WRITE: [AgentLabel; 9] = [
            AgentLabel::Conflict,
            AgentLabel::Character,
            AgentLabel::Setting,
            AgentLabel::Plot,
            AgentLabel::Exposition,
            AgentLabel::RisingAction,
            AgentLabel::Climax,
            AgentLabel::FallingAction,
            AgentLabel::Resolution,
        ];
        const PLAN: [AgentLabel; 5] = [
            AgentLabel::Conflict,
            AgentLabel::Character,
            AgentLabel::Setting,
            AgentLabel::Plot,
            AgentLabel::Finalizer,
        ];
        // The end-to-end baseline is a single writing call; its output is
        // the whole story, recorded under the Final Story header.
        const E2E: [AgentLabel; 1] = [AgentLabel::Finalizer];
        match self {
            Variant::PlanWrite => &PLAN_WRITE,
            Variant::Plan => &PLAN,
            Variant::Write => &WRITING_SECTION_LABELS,
            Variant::E2e => &E2E,
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Variant::E2e => "e2e",
            Variant::Plan => "plan",
            Variant::Write => "write",
            Variant::PlanWrite => "plan-write",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_VARIANTS
            .iter()
            .copied()
            .find(|v| v.slug() == s)
            .ok_or_else(|| format!("unknown variant: {s} (expected e2e|plan|write|plan-write)"))
    }
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("scratchpad entry {0} does not belong to variant {1}")]
    ForeignEntry(AgentLabel, Variant),
    #[error(transparent)]
    Scratchpad(#[from] ScratchpadError),
    #[error(transparent)]
    Prompt(#[from] crate::agents::PromptError),
}

/// Run-time knobs for one orchestrated generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrchestratorConfig {
    pub variant: Variant,
    /// Safety bound on steps, above the longest sequence by default.
    pub max_steps: usize,
    /// Backend profile per agent; labels not present use `default_route`.
    #[serde(default)]
    pub routing: HashMap<AgentLabel, String>,
    pub default_route: String,
    pub max_output_tokens: usize,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl OrchestratorConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            max_steps: 16,
            routing: HashMap::new(),
            default_route: "mock-echo".to_string(),
            max_output_tokens: crate::backend::DEFAULT_MAX_OUTPUT_TOKENS,
            temperature: None,
            seed: None,
        }
    }

    fn route(&self, label: AgentLabel) -> &str {
        self.routing
            .get(&label)
            .map(|s| s.as_str())
            .unwrap_or(&self.default_route)
    }
}

/// One agent call in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub label: AgentLabel,
    pub prompt: String,
    pub output: String,
    pub wall_ms: u64,
}

/// Full record of one orchestrated generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub task: String,
    pub variant: Variant,
    pub steps: Vec<StepRecord>,
    pub final_scratchpad: Scratchpad,
    pub story: String,
    /// Set when the step budget ran out before the sequence completed.
    pub step_budget_exhausted: bool,
}

/// A backend failure mid-run, carrying the partial trace so callers can
/// persist what the completed steps already paid for.
#[derive(Debug, Error)]
#[error("step {step} ({label}) failed: {source}")]
pub struct RunFailure {
    pub step: usize,
    pub label: AgentLabel,
    #[source]
    pub source: RunFailureKind,
    pub partial: Box<RunTrace>,
}

#[derive(Debug, Error)]
pub enum RunFailureKind {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
}

/// Pick the next agent: the first label of the variant's sequence that has
/// not contributed yet, or `None` when the sequence is exhausted.
pub fn next_agent(s: &Scratchpad, variant: Variant) -> Result<Option<AgentLabel>, OrchestratorError> {
    let sequence = variant.sequence();
    for label in s.labels() {
        if label != AgentLabel::Task && !sequence.contains(&label) {
            return Err(OrchestratorError::ForeignEntry(label, variant));
        }
    }
    Ok(sequence.iter().copied().find(|l| !s.contains(*l)))
}

/// Prompt for a step. The end-to-end baseline passes the task through
/// unchanged; every other variant renders the agent's template.
pub fn prompt_for_step(
    variant: Variant,
    label: AgentLabel,
    s: &Scratchpad,
    templates: &TemplateSet,
) -> Result<String, OrchestratorError> {
    if variant == Variant::E2e {
        return Ok(s
            .get(AgentLabel::Task)
            .map(|t| t.to_string())
            .unwrap_or_default());
    }
    Ok(render_agent_prompt(label, s, templates)?)
}

/// Run the agent loop: initialize the scratchpad with the task, repeatedly
/// pick the next agent, render its prompt, call its backend, append the
/// output, and collect writing outputs into the story.
pub fn run(
    task: &str,
    config: &OrchestratorConfig,
    backends: &BackendRegistry,
    templates: &TemplateSet,
) -> Result<RunTrace, RunFailure> {
    let fail = |step: usize, label: AgentLabel, source: RunFailureKind, partial: RunTrace| RunFailure {
        step,
        label,
        source,
        partial: Box::new(partial),
    };
    let make_trace = |steps: &[StepRecord], scratchpad: &Scratchpad, parts: &[String], exhausted| RunTrace {
        task: task.to_string(),
        variant: config.variant,
        steps: steps.to_vec(),
        final_scratchpad: scratchpad.clone(),
        story: parts.join(STORY_SEPARATOR),
        step_budget_exhausted: exhausted,
    };

    let mut scratchpad = Scratchpad::init(task).map_err(|e| fail(
        0,
        AgentLabel::Task,
        RunFailureKind::Orchestrator(e.into()),
        make_trace(&[], &Scratchpad::empty(), &[], false),
    ))?;
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut story_parts: Vec<String> = Vec::new();

    loop {
        let next = next_agent(&scratchpad, config.variant).map_err(|e| {
            fail(
                steps.len(),
                AgentLabel::Task,
                RunFailureKind::Orchestrator(e),
                make_trace(&steps, &scratchpad, &story_parts, false),
            )
        })?;
        let Some(label) = next else {
            return Ok(make_trace(&steps, &scratchpad, &story_parts, false));
        };
        if steps.len() >= config.max_steps {
            log::warn!(
                "step budget of {} exhausted before {label} could run",
                config.max_steps
            );
            return Ok(make_trace(&steps, &scratchpad, &story_parts, true));
        }

        let step_start = Instant::now();
        let result = run_step(label, &scratchpad, config, backends, templates);
        let (prompt, output) = match result {
            Ok(v) => v,
            Err(e) => {
                return Err(fail(
                    steps.len(),
                    label,
                    e,
                    make_trace(&steps, &scratchpad, &story_parts, false),
                ))
            }
        };
        scratchpad = scratchpad.append_text(label, &output).map_err(|e| {
            fail(
                steps.len(),
                label,
                RunFailureKind::Orchestrator(e.into()),
                make_trace(&steps, &scratchpad, &story_parts, false),
            )
        })?;
        if agent_kind(label) == Some(AgentKind::Writing) {
            story_parts.push(output.clone());
        }
        steps.push(StepRecord {
            index: steps.len(),
            label,
            prompt,
            output,
            wall_ms: step_start.elapsed().as_millis() as u64,
        });
    }
}

fn run_step(
    label: AgentLabel,
    scratchpad: &Scratchpad,
    config: &OrchestratorConfig,
    backends: &BackendRegistry,
    templates: &TemplateSet,
) -> Result<(String, String), RunFailureKind> {
    let prompt = prompt_for_step(config.variant, label, scratchpad, templates)?;
    let backend = backends.get(config.route(label))?;
    let req = GenerationRequest::new(&prompt)?
        .with_max_output_tokens(config.max_output_tokens)
        .with_sampling(config.temperature, config.seed);
    let resp = backend.generate(&req)?;
    Ok((prompt, resp.text))
}

/// Run against one backend for every agent.
pub fn run_with(
    task: &str,
    config: &OrchestratorConfig,
    backend: Box<dyn TextBackend>,
    templates: &TemplateSet,
) -> Result<RunTrace, RunFailure> {
    let mut registry = BackendRegistry::builtin();
    let name = config.default_route.clone();
    registry.insert(&name, backend);
    run(task, config, &registry, templates)
}

/// Persist a trace under `<out>/<task_id>/<variant>/`: per-step records in
/// `trace.jsonl`, the final scratchpad in `scratchpad.txt`, and the story in
/// `story.txt`.
pub fn write_run_dir(out_root: &Path, task_id: &str, trace: &RunTrace) -> std::io::Result<std::path::PathBuf> {
    let dir = out_root.join(task_id).join(trace.variant.slug());
    std::fs::create_dir_all(&dir)?;
    let mut lines = String::new();
    for step in &trace.steps {
        lines.push_str(&serde_json::to_string(step).expect("step serializes"));
        lines.push('\n');
    }
    std::fs::write(dir.join("trace.jsonl"), lines)?;
    let scratchpad_text = trace
        .final_scratchpad
        .render()
        .unwrap_or_default();
    std::fs::write(dir.join("scratchpad.txt"), scratchpad_text)?;
    std::fs::write(dir.join("story.txt"), &trace.story)?;
    Ok(dir)
}

/// Variant sequences only ever extend the canonical planning/writing order.
pub fn planning_then_writing(labels: &[AgentLabel]) -> bool {
    let planning_end = labels.iter().rposition(|l| PLANNING_LABELS.contains(l));
    let writing_start = labels.iter().position(|l| !PLANNING_LABELS.contains(l));
    match (planning_end, writing_start) {
        (Some(p), Some(w)) => p < w,
        _ => true,
    }
}
