//! Training data by distilled backtranslation: a teacher model
//! reverse-engineers plans from gold (prompt, story) pairs and splits each
//! story into its five narrative sections; the results become per-agent
//! training files whose inputs are byte-identical to inference-time prompts.

use crate::agents::{render_agent_prompt, PromptError, TemplateSet};
use crate::backend::{BackendError, GenerationRequest, TextBackend};
use crate::dataset::DatasetRecord;
use crate::label::{AgentLabel, PLANNING_LABELS, WRITING_SECTION_LABELS};
use crate::scratchpad::{Scratchpad, ScratchpadError};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

/// A gold (prompt, story) pair; same shape as a dataset record.
pub type GoldExample = DatasetRecord;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{0} is not a planning agent")]
    NotAPlanningAgent(AgentLabel),
    #[error("gold story is empty")]
    EmptyStory,
    #[error("teacher response is empty")]
    EmptyResponse,
    #[error("section {section} is missing from the teacher response")]
    MissingSection { section: &'static str },
    #[error("anchor sentence for {section} not found in the story: {sentence:?}")]
    AnchorNotFound { section: &'static str, sentence: String },
    #[error("anchor for {section} appears before the previous section's anchor")]
    NonMonotonicAnchors { section: &'static str },
    #[error("plans are missing the {0} agent")]
    IncompletePlans(AgentLabel),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Scratchpad(#[from] ScratchpadError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Byte spans of the five narrative sections; contiguous, in order, and
/// jointly covering the story.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionSplit {
    pub spans: [(AgentLabel, usize, usize); 5],
}

impl SectionSplit {
    pub fn section_text<'a>(&self, story: &'a str, label: AgentLabel) -> Option<&'a str> {
        self.spans
            .iter()
            .find(|(l, _, _)| *l == label)
            .map(|(_, start, end)| &story[*start..*end])
    }
}

/// One fine-tuning record for one agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTrainingExample {
    pub id: String,
    pub agent: AgentLabel,
    pub input: String,
    pub target: String,
}

/// A gold example that could not be processed, with the reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectRecord {
    pub id: String,
    pub reason: String,
}

/// Prompt asking the teacher for a planning agent's output over the gold
/// pair: the agent's usual template, rendered over a scratchpad holding the
/// task and the human-written response.
pub fn build_planning_target_prompt(
    agent: AgentLabel,
    gold: &GoldExample,
    templates: &TemplateSet,
) -> Result<String, SynthError> {
    if !agent.is_planning() {
        return Err(SynthError::NotAPlanningAgent(agent));
    }
    let pad = Scratchpad::init(&gold.prompt)?.append_text(AgentLabel::GoldResponse, &gold.story)?;
    Ok(render_agent_prompt(agent, &pad, templates)?)
}

/// Prompt asking the teacher to split the gold story into the five sections.
pub fn build_story_split_prompt(
    gold: &GoldExample,
    templates: &TemplateSet,
) -> Result<String, SynthError> {
    if gold.story.trim().is_empty() {
        return Err(SynthError::EmptyStory);
    }
    Ok(templates
        .get("story_split")
        .replace("<story>", &gold.story)
        .trim_end()
        .to_string())
}

/// Normalized copy of `text` (whitespace runs collapsed to single spaces)
/// plus a byte map from normalized offsets back to original offsets.
fn normalize_with_map(text: &str) -> (String, Vec<usize>) {
    let mut out = String::new();
    let mut map = Vec::new();
    let mut pending_space: Option<usize> = None;
    for (idx, c) in text.char_indices() {
        if c.is_whitespace() {
            if !out.is_empty() {
                pending_space.get_or_insert(idx);
            }
        } else {
            if let Some(space_at) = pending_space.take() {
                out.push(' ');
                map.push(space_at);
            }
            let mut buf = [0u8; 4];
            for _ in c.encode_utf8(&mut buf).bytes() {
                map.push(idx);
            }
            out.push(c);
        }
    }
    (out, map)
}

/// Locate `sentence` in `story` after byte offset `after`: exact substring
/// first, whitespace-normalized second. Returns the original byte offset.
fn locate_anchor(
    story: &str,
    sentence: &str,
    after: Option<usize>,
    section: &'static str,
) -> Result<usize, SynthError> {
    let search_from = |start: usize| story[start..].find(sentence).map(|i| start + i);
    let exact_anywhere = search_from(0);
    if let Some(pos) = exact_anywhere {
        let lower = after.map(|a| a + 1).unwrap_or(0);
        if pos >= lower {
            return Ok(pos);
        }
        if let Some(later) = search_from(lower) {
            return Ok(later);
        }
        return Err(SynthError::NonMonotonicAnchors { section });
    }

    let (norm_story, map) = normalize_with_map(story);
    let (norm_sentence, _) = normalize_with_map(sentence);
    if norm_sentence.is_empty() {
        return Err(SynthError::AnchorNotFound {
            section,
            sentence: sentence.to_string(),
        });
    }
    let mut found: Option<usize> = None;
    let mut offset = 0;
    while let Some(i) = norm_story[offset..].find(&norm_sentence) {
        let orig = map[offset + i];
        let lower = after.map(|a| a + 1).unwrap_or(0);
        if orig >= lower {
            found = Some(orig);
            break;
        }
        found = found.or(Some(usize::MAX)); // matched, but too early
        offset += i + 1;
    }
    match found {
        Some(usize::MAX) => Err(SynthError::NonMonotonicAnchors { section }),
        Some(pos) => Ok(pos),
        None => Err(SynthError::AnchorNotFound {
            section,
            sentence: sentence.to_string(),
        }),
    }
}

fn section_header(label: AgentLabel) -> &'static str {
    label.header()
}

/// Pull the quoted first sentence for each `[Section]` header out of the
/// teacher response.
fn extract_anchor_sentences(teacher_output: &str) -> Result<[String; 5], SynthError> {
    let mut sentences: Vec<String> = Vec::with_capacity(5);
    for (idx, label) in WRITING_SECTION_LABELS.iter().enumerate() {
        let header = format!("[{}]", section_header(*label));
        let Some(start) = teacher_output.find(&header) else {
            return Err(SynthError::MissingSection {
                section: section_header(*label),
            });
        };
        let rest = &teacher_output[start + header.len()..];
        // The quoted sentence runs until the next section header or the end.
        let end = WRITING_SECTION_LABELS[idx + 1..]
            .iter()
            .filter_map(|l| rest.find(&format!("[{}]", section_header(*l))))
            .min()
            .unwrap_or(rest.len());
        let mut sentence = rest[..end].trim();
        sentence = sentence.strip_prefix(':').unwrap_or(sentence).trim();
        for (open, close) in [('"', '"'), ('\u{201c}', '\u{201d}')] {
            if sentence.len() >= 2 && sentence.starts_with(open) && sentence.ends_with(close) {
                sentence = &sentence[open.len_utf8()..sentence.len() - close.len_utf8()];
            }
        }
        if sentence.is_empty() {
            return Err(SynthError::AnchorNotFound {
                section: section_header(*label),
                sentence: String::new(),
            });
        }
        sentences.push(sentence.to_string());
    }
    Ok(sentences.try_into().expect("exactly five sections"))
}

/// Turn the teacher's split response into byte spans over the story. The
/// five quoted first sentences anchor the section starts; the exposition
/// always starts at byte zero so the spans cover the whole story.
pub fn parse_split_response(teacher_output: &str, story: &str) -> Result<SectionSplit, SynthError> {
    if teacher_output.trim().is_empty() {
        return Err(SynthError::EmptyResponse);
    }
    let sentences = extract_anchor_sentences(teacher_output)?;
    let mut anchors = [0usize; 5];
    let mut prev: Option<usize> = None;
    for (i, sentence) in sentences.iter().enumerate() {
        let pos = locate_anchor(story, sentence, prev, section_header(WRITING_SECTION_LABELS[i]))?;
        anchors[i] = pos;
        prev = Some(pos);
    }
    let mut spans = [(AgentLabel::Exposition, 0usize, 0usize); 5];
    for i in 0..5 {
        let start = if i == 0 { 0 } else { anchors[i] };
        let end = if i == 4 { story.len() } else { anchors[i + 1] };
        spans[i] = (WRITING_SECTION_LABELS[i], start, end);
    }
    Ok(SectionSplit { spans })
}

/// Build the nine training records for one gold example: four planning
/// records (task-only prompt, teacher plan as target) and five writing
/// records (teacher-forced prompt over the task, all plans, and the gold
/// prior sections; gold section text as target).
pub fn emit_training_examples(
    gold: &GoldExample,
    plans: &HashMap<AgentLabel, String>,
    split: &SectionSplit,
    templates: &TemplateSet,
) -> Result<Vec<AgentTrainingExample>, SynthError> {
    for label in PLANNING_LABELS {
        if !plans.contains_key(&label) {
            return Err(SynthError::IncompletePlans(label));
        }
    }
    let mut examples = Vec::with_capacity(9);

    let task_only = Scratchpad::init(&gold.prompt)?;
    for label in PLANNING_LABELS {
        examples.push(AgentTrainingExample {
            id: gold.id.clone(),
            agent: label,
            input: render_agent_prompt(label, &task_only, templates)?,
            target: plans[&label].clone(),
        });
    }

    let mut pad = task_only;
    for label in PLANNING_LABELS {
        pad = pad.append_text(label, &plans[&label])?;
    }
    for label in WRITING_SECTION_LABELS {
        let target = split
            .section_text(&gold.story, label)
            .expect("split covers all five sections")
            .to_string();
        examples.push(AgentTrainingExample {
            id: gold.id.clone(),
            agent: label,
            input: render_agent_prompt(label, &pad, templates)?,
            target: target.clone(),
        });
        pad = pad.append_text(label, &target)?;
    }
    Ok(examples)
}

/// Run the whole backtranslation for one gold example against a teacher.
pub fn synthesize_example(
    gold: &GoldExample,
    teacher: &dyn TextBackend,
    templates: &TemplateSet,
    max_output_tokens: usize,
) -> Result<Vec<AgentTrainingExample>, SynthError> {
    let mut plans = HashMap::new();
    for label in PLANNING_LABELS {
        let prompt = build_planning_target_prompt(label, gold, templates)?;
        let req = GenerationRequest::new(&prompt)?.with_max_output_tokens(max_output_tokens);
        plans.insert(label, teacher.generate(&req)?.text);
    }
    let split_prompt = build_story_split_prompt(gold, templates)?;
    let req = GenerationRequest::new(&split_prompt)?.with_max_output_tokens(max_output_tokens);
    let split_response = teacher.generate(&req)?.text;
    let split = parse_split_response(&split_response, &gold.story)?;
    emit_training_examples(gold, &plans, &split, templates)
}

/// Append training records to `<dir>/<agent>.jsonl`, one file per agent.
pub fn write_training_files(dir: &Path, examples: &[AgentTrainingExample]) -> std::io::Result<()> {
    use std::io::Write;
    std::fs::create_dir_all(dir)?;
    let mut files: HashMap<AgentLabel, std::fs::File> = HashMap::new();
    for example in examples {
        let file = match files.entry(example.agent) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                let path = dir.join(format!("{}.jsonl", example.agent.name().to_lowercase()));
                e.insert(
                    std::fs::OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(path)?,
                )
            }
        };
        let record = serde_json::json!({
            "id": example.id,
            "input": example.input,
            "target": example.target,
        });
        writeln!(file, "{record}")?;
    }
    Ok(())
}

/// Append reject records to `<dir>/rejects.jsonl`.
pub fn write_rejects(dir: &Path, rejects: &[RejectRecord]) -> std::io::Result<()> {
    use std::io::Write;
    std::fs::create_dir_all(dir)?;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("rejects.jsonl"))?;
    for reject in rejects {
        writeln!(file, "{}", serde_json::to_string(reject).expect("serializes"))?;
    }
    Ok(())
}
