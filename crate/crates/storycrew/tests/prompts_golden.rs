//! Golden-file tests pinning every rendered prompt byte-for-byte.
//!
//! Run with STORYCREW_UPDATE_GOLDEN=1 to regenerate the files under
//! tests/golden/ after an intentional template change.

use std::path::PathBuf;
use storycrew::judge::build_judge_prompt;
use storycrew::label::AgentLabel::{self, *};
use storycrew::synthdata::{build_planning_target_prompt, build_story_split_prompt, GoldExample};
use storycrew::{render_agent_prompt, Scratchpad, TemplateSet};

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn check(name: &str, actual: &str) {
    let path = golden_dir().join(name);
    if std::env::var("STORYCREW_UPDATE_GOLDEN").is_ok() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden file {}: {e}", path.display()));
    assert_eq!(
        actual,
        expected.trim_end_matches('\n'),
        "prompt differs from golden file {name}"
    );
}

/// Scratchpad instantiated with the placeholder texts of the scratchpad
/// format listing.
fn placeholder_pad(labels: &[AgentLabel]) -> Scratchpad {
    let mut pad = Scratchpad::init("<the original writing prompt>").unwrap();
    for &label in labels {
        let placeholder = match label {
            Conflict => "<the output of the conflict agent>",
            Character => "<the output of the character agent>",
            Setting => "<the output of the setting agent>",
            Plot => "<the output of the plot agent>",
            Exposition => "<the output of the exposition agent>",
            RisingAction => "<the output of the rising action agent>",
            Climax => "<the output of the climax agent>",
            FallingAction => "<the output of the falling action agent>",
            Resolution => "<the output of the resolution agent>",
            GoldResponse => "<the gold output>",
            _ => unreachable!(),
        };
        pad = pad.append_text(label, placeholder).unwrap();
    }
    pad
}

const PLAN_SEQUENCE: [AgentLabel; 4] = [Conflict, Character, Setting, Plot];

#[test]
fn scratchpad_format_golden() {
    let pad = placeholder_pad(&[
        Conflict,
        Character,
        Setting,
        Plot,
        Exposition,
        RisingAction,
        Climax,
        FallingAction,
        Resolution,
    ]);
    check("scratchpad_full.txt", &pad.render().unwrap());
}

#[test]
fn planning_agent_prompts_golden() {
    let templates = TemplateSet::default();
    for (i, label) in PLAN_SEQUENCE.iter().enumerate() {
        let pad = placeholder_pad(&PLAN_SEQUENCE[..i]);
        let prompt = render_agent_prompt(*label, &pad, &templates).unwrap();
        check(&format!("{}.txt", label.name().to_lowercase()), &prompt);
    }
}

#[test]
fn writing_agent_prompts_golden() {
    let templates = TemplateSet::default();
    let writing = [Exposition, RisingAction, Climax, FallingAction, Resolution];
    for (i, label) in writing.iter().enumerate() {
        let mut labels = PLAN_SEQUENCE.to_vec();
        labels.extend_from_slice(&writing[..i]);
        let pad = placeholder_pad(&labels);
        let prompt = render_agent_prompt(*label, &pad, &templates).unwrap();
        check(&format!("{}.txt", label.name().to_lowercase()), &prompt);
    }
}

#[test]
fn finalizer_prompt_golden() {
    let templates = TemplateSet::default();
    let pad = placeholder_pad(&PLAN_SEQUENCE);
    let prompt = render_agent_prompt(Finalizer, &pad, &templates).unwrap();
    check("finalizer.txt", &prompt);
}

#[test]
fn judge_prompt_golden() {
    let templates = TemplateSet::default();
    let prompt = build_judge_prompt("<story a text>", "<story b text>", &templates).unwrap();
    check("judge.txt", &prompt);
}

#[test]
fn synth_planning_prompt_golden() {
    let templates = TemplateSet::default();
    let gold = GoldExample {
        id: "golden".into(),
        prompt: "<the original writing prompt>".into(),
        story: "<the gold output>".into(),
        split: storycrew::dataset::Split::Train,
    };
    let prompt = build_planning_target_prompt(Conflict, &gold, &templates).unwrap();
    check("synth_conflict.txt", &prompt);
}

#[test]
fn story_split_prompt_golden() {
    let templates = TemplateSet::default();
    let gold = GoldExample {
        id: "golden".into(),
        prompt: "<the original writing prompt>".into(),
        story: "<the gold output>".into(),
        split: storycrew::dataset::Split::Train,
    };
    let prompt = build_story_split_prompt(&gold, &templates).unwrap();
    check("story_split.txt", &prompt);
}

#[test]
fn full_scratchpad_template_parses_back() {
    let text = std::fs::read_to_string(golden_dir().join("scratchpad_full.txt")).unwrap();
    let pad = Scratchpad::parse(text.trim_end_matches('\n')).unwrap();
    assert_eq!(pad.len(), 10);
    let labels: Vec<AgentLabel> = pad.labels().collect();
    assert_eq!(
        labels,
        vec![Task, Conflict, Character, Setting, Plot, Exposition, RisingAction, Climax, FallingAction, Resolution]
    );
}
