//! Multi-agent collaborative story writing.
//!
//! Specialized planning and writing agents cooperate through a shared,
//! label-keyed scratchpad under a deterministic orchestrator. The crate also
//! ships the surrounding evaluation stack: surface text metrics, a pairwise
//! LLM-judge harness with Bradley-Terry ranking, agreement statistics, and a
//! back-translation pipeline that turns gold stories into per-agent training
//! files.

pub mod agents;
pub mod backend;
pub mod dataset;
pub mod judge;
pub mod label;
pub mod metrics;
pub mod orchestrator;
pub mod ranking;
pub mod scratchpad;
pub mod synthdata;

pub use agents::{
    agent_kind, agent_registry, agent_spec, identifiers_phrase, render_agent_prompt, AgentKind,
    AgentSpec, IdentifierStyle, PromptError, TemplateSet,
};
pub use backend::{
    choose_input_bucket, estimate_tokens, generate, BackendError, BackendKind, BackendProfile,
    BackendRegistry, EchoBackend, GenerationRequest, GenerationResponse, MockJudgeBackend,
    ScriptedBackend, TextBackend,
};
pub use label::{AgentLabel, ALL_LABELS, PLANNING_LABELS, WRITING_SECTION_LABELS};
pub use orchestrator::{
    next_agent, prompt_for_step, run, run_with, write_run_dir, OrchestratorConfig,
    OrchestratorError, RunFailure, RunTrace, StepRecord, Variant,
};
pub use scratchpad::{Scratchpad, ScratchpadEntry, ScratchpadError};
