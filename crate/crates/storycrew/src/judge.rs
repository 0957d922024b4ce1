//! Side-by-side judging: prompt construction, verdict parsing, pair
//! scheduling with randomized presentation order, wins accumulation, and
//! order-swap consistency.

use crate::agents::TemplateSet;
use crate::ranking::{RankingError, WinsMatrix};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum JudgeError {
    #[error("story is empty")]
    EmptyStory,
    #[error("judge output has no parsable verdict: {0}")]
    MalformedVerdict(String),
    #[error("a pairwise schedule needs at least two systems")]
    TooFewSystems,
    #[error("the two runs do not cover the same pairs with flipped presentation")]
    PairMismatch,
    #[error(transparent)]
    Ranking(#[from] RankingError),
}

/// The five judged dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dimension {
    Plot,
    Creativity,
    Development,
    LanguageUse,
    Overall,
}

pub const ALL_DIMENSIONS: [Dimension; 5] = [
    Dimension::Plot,
    Dimension::Creativity,
    Dimension::Development,
    Dimension::LanguageUse,
    Dimension::Overall,
];

impl Dimension {
    /// Line prefix used in the verdict block.
    pub fn line_label(self) -> &'static str {
        match self {
            Dimension::Plot => "Plot",
            Dimension::Creativity => "Creativity",
            Dimension::Development => "Development",
            Dimension::LanguageUse => "Language Use",
            Dimension::Overall => "Overall",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.line_label())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "plot" => Ok(Dimension::Plot),
            "creativity" => Ok(Dimension::Creativity),
            "development" => Ok(Dimension::Development),
            "language" | "language-use" | "language_use" => Ok(Dimension::LanguageUse),
            "overall" => Ok(Dimension::Overall),
            other => Err(format!(
                "unknown dimension: {other} (expected plot|creativity|development|language|overall)"
            )),
        }
    }
}

/// A judge's per-dimension choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
    Same,
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Choice::A => f.write_str("A"),
            Choice::B => f.write_str("B"),
            Choice::Same => f.write_str("Same"),
        }
    }
}

/// How ties enter the wins matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    /// Same adds half a win to each side.
    Half,
    /// Same is dropped.
    Drop,
}

impl FromStr for TiePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "half" => Ok(TiePolicy::Half),
            "drop" => Ok(TiePolicy::Drop),
            other => Err(format!("unknown tie policy: {other} (expected half|drop)")),
        }
    }
}

/// One scheduled side-by-side comparison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTask {
    pub prompt_id: String,
    pub system_i: String,
    pub system_j: String,
    /// Presentation: when true, system_i is shown as Story A.
    pub i_is_story_a: bool,
    pub seed: u64,
}

impl PairTask {
    pub fn story_a_system(&self) -> &str {
        if self.i_is_story_a {
            &self.system_i
        } else {
            &self.system_j
        }
    }

    pub fn story_b_system(&self) -> &str {
        if self.i_is_story_a {
            &self.system_j
        } else {
            &self.system_i
        }
    }

    /// The same pair with presentation order flipped.
    pub fn flipped(&self) -> Self {
        Self {
            i_is_story_a: !self.i_is_story_a,
            ..self.clone()
        }
    }

    fn pair_key(&self) -> (String, String, String) {
        let (lo, hi) = if self.system_i <= self.system_j {
            (self.system_i.clone(), self.system_j.clone())
        } else {
            (self.system_j.clone(), self.system_i.clone())
        };
        (self.prompt_id.clone(), lo, hi)
    }
}

/// Parsed per-dimension choices, with the raw assessment retained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseVerdict {
    pub plot: Choice,
    pub creativity: Choice,
    pub development: Choice,
    pub language_use: Choice,
    pub overall: Choice,
    #[serde(default)]
    pub raw: String,
}

impl PairwiseVerdict {
    pub fn choice(&self, dimension: Dimension) -> Choice {
        match dimension {
            Dimension::Plot => self.plot,
            Dimension::Creativity => self.creativity,
            Dimension::Development => self.development,
            Dimension::LanguageUse => self.language_use,
            Dimension::Overall => self.overall,
        }
    }
}

/// Fill the side-by-side evaluation template with the two stories.
pub fn build_judge_prompt(
    story_a: &str,
    story_b: &str,
    templates: &TemplateSet,
) -> Result<String, JudgeError> {
    if story_a.trim().is_empty() || story_b.trim().is_empty() {
        return Err(JudgeError::EmptyStory);
    }
    Ok(templates
        .get("judge")
        .replace("<story a>", story_a)
        .replace("<story b>", story_b)
        .trim_end()
        .to_string())
}

const VERDICT_ANCHOR: &str = "Based on my assessment";

fn parse_choice(value: &str) -> Option<Choice> {
    let cleaned: String = value
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_lowercase();
    match cleaned.as_str() {
        "a" | "storya" => Some(Choice::A),
        "b" | "storyb" => Some(Choice::B),
        "same" | "tie" => Some(Choice::Same),
        _ => None,
    }
}

/// Extract the verdict from judge output: the conclusion block after the
/// last "Based on my assessment" anchor (or the tail of the output when the
/// anchor is missing), one `<Dimension>: <A|B|Same>` line per dimension,
/// tolerant of emphasis characters.
pub fn parse_verdict(judge_output: &str) -> Result<PairwiseVerdict, JudgeError> {
    if judge_output.trim().is_empty() {
        return Err(JudgeError::MalformedVerdict("empty output".into()));
    }
    let block_start = judge_output.rfind(VERDICT_ANCHOR).unwrap_or(0);
    let block = &judge_output[block_start..];

    let mut choices: BTreeMap<&'static str, Choice> = BTreeMap::new();
    for line in block.lines() {
        let trimmed = line.trim().trim_matches(|c| matches!(c, '*' | '_' | '#' | '`'));
        let Some((head, tail)) = trimmed.split_once(':') else {
            continue;
        };
        let head = head.trim().trim_matches(|c| matches!(c, '*' | '_' | '`'));
        for dim in ALL_DIMENSIONS {
            if head.eq_ignore_ascii_case(dim.line_label()) {
                if let Some(choice) = parse_choice(tail) {
                    // Keep the last occurrence within the block.
                    choices.insert(dim.line_label(), choice);
                }
            }
        }
    }

    let get = |dim: Dimension| {
        choices
            .get(dim.line_label())
            .copied()
            .ok_or_else(|| JudgeError::MalformedVerdict(format!("missing dimension {dim}")))
    };
    Ok(PairwiseVerdict {
        plot: get(Dimension::Plot)?,
        creativity: get(Dimension::Creativity)?,
        development: get(Dimension::Development)?,
        language_use: get(Dimension::LanguageUse)?,
        overall: get(Dimension::Overall)?,
        raw: judge_output.to_string(),
    })
}

/// Schedule every unordered system pair once per prompt, with a seeded coin
/// deciding which system is shown as Story A. Same seed, same schedule.
pub fn schedule_pairs(
    systems: &[String],
    prompt_ids: &[String],
    seed: u64,
) -> Result<Vec<PairTask>, JudgeError> {
    if systems.len() < 2 {
        return Err(JudgeError::TooFewSystems);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::with_capacity(prompt_ids.len() * systems.len() * (systems.len() - 1) / 2);
    for prompt_id in prompt_ids {
        for i in 0..systems.len() {
            for j in (i + 1)..systems.len() {
                tasks.push(PairTask {
                    prompt_id: prompt_id.clone(),
                    system_i: systems[i].clone(),
                    system_j: systems[j].clone(),
                    i_is_story_a: rng.random_bool(0.5),
                    seed,
                });
            }
        }
    }
    Ok(tasks)
}

/// Fold verdicts into a wins matrix for one dimension, un-shuffling A/B back
/// to system identities through each task's presentation.
pub fn accumulate_wins(
    judged: &[(PairTask, PairwiseVerdict)],
    dimension: Dimension,
    tie_policy: TiePolicy,
    systems: &[String],
) -> Result<WinsMatrix, JudgeError> {
    let mut matrix = WinsMatrix::zeros(dimension, systems.to_vec());
    for (task, verdict) in judged {
        let (winner, loser) = match verdict.choice(dimension) {
            Choice::A => (task.story_a_system(), task.story_b_system()),
            Choice::B => (task.story_b_system(), task.story_a_system()),
            Choice::Same => {
                if tie_policy == TiePolicy::Half {
                    matrix.add_win(&task.system_i, &task.system_j, 0.5)?;
                    matrix.add_win(&task.system_j, &task.system_i, 0.5)?;
                }
                continue;
            }
        };
        matrix.add_win(winner, loser, 1.0)?;
    }
    Ok(matrix)
}

/// Which system a verdict prefers, or `None` on Same.
fn preferred_system<'a>(task: &'a PairTask, verdict: &PairwiseVerdict, dimension: Dimension) -> Option<&'a str> {
    match verdict.choice(dimension) {
        Choice::A => Some(task.story_a_system()),
        Choice::B => Some(task.story_b_system()),
        Choice::Same => None,
    }
}

/// Fraction of pairs whose preferred system is unchanged when the
/// presentation order is flipped in a second run. Same/Same counts as
/// consistent.
pub fn consistency_rate(
    first_run: &[(PairTask, PairwiseVerdict)],
    swapped_run: &[(PairTask, PairwiseVerdict)],
    dimension: Dimension,
) -> Result<f64, JudgeError> {
    if first_run.len() != swapped_run.len() || first_run.is_empty() {
        return Err(JudgeError::PairMismatch);
    }
    let mut second: BTreeMap<(String, String, String), &(PairTask, PairwiseVerdict)> =
        BTreeMap::new();
    for entry in swapped_run {
        second.insert(entry.0.pair_key(), entry);
    }
    let mut consistent = 0usize;
    for (task, verdict) in first_run {
        let Some((swapped_task, swapped_verdict)) = second.get(&task.pair_key()).copied() else {
            return Err(JudgeError::PairMismatch);
        };
        if swapped_task.i_is_story_a == task.i_is_story_a {
            return Err(JudgeError::PairMismatch);
        }
        let first_pref = preferred_system(task, verdict, dimension);
        let second_pref = preferred_system(swapped_task, swapped_verdict, dimension);
        if first_pref == second_pref {
            consistent += 1;
        }
    }
    Ok(consistent as f64 / first_run.len() as f64)
}
