//! Loading and validating the prompts-and-stories dataset (JSON Lines, one
//! record per line) and its corpus statistics.

use crate::metrics::whitespace_token_count;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: missing field {field}")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: unknown split {value:?}")]
    UnknownSplit { line: usize, value: String },
    #[error("dataset is empty")]
    EmptyDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

pub const ALL_SPLITS: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => f.write_str("train"),
            Split::Valid => f.write_str("valid"),
            Split::Test => f.write_str("test"),
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split: {other}")),
        }
    }
}

/// One prompt/story pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub prompt: String,
    pub story: String,
    pub split: Split,
}

/// Renames applied while loading: keys are the canonical field names
/// (`id`, `prompt`, `story`, `split`) mapped to the names used in the file,
/// plus split-value aliases (e.g. `dev` -> `valid`).
pub type FieldMap = HashMap<String, String>;

fn lookup<'a>(
    object: &'a serde_json::Map<String, serde_json::Value>,
    canonical: &'static str,
    field_map: Option<&FieldMap>,
) -> Option<&'a serde_json::Value> {
    let name = field_map
        .and_then(|m| m.get(canonical))
        .map(|s| s.as_str())
        .unwrap_or(canonical);
    object.get(name)
}

/// Load a JSONL dataset, validating every record. `field_map` renames
/// fields and split values coming from differently-named releases.
pub fn load_dataset(path: &Path, field_map: Option<&FieldMap>) -> Result<Vec<DatasetRecord>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut records = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(raw_line).map_err(|e| DatasetError::MalformedRecord {
                line,
                reason: e.to_string(),
            })?;
        let object = value.as_object().ok_or(DatasetError::MalformedRecord {
            line,
            reason: "record is not a JSON object".into(),
        })?;
        let text_field = |field: &'static str| -> Result<String, DatasetError> {
            let v = lookup(object, field, field_map).ok_or(DatasetError::MissingField { line, field })?;
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            if s.trim().is_empty() {
                return Err(DatasetError::MalformedRecord {
                    line,
                    reason: format!("field {field} is empty"),
                });
            }
            Ok(s)
        };
        let id = text_field("id")?;
        let prompt = text_field("prompt")?;
        let story = text_field("story")?;
        let raw_split = text_field("split")?;
        let mapped = field_map
            .and_then(|m| m.get(&raw_split))
            .cloned()
            .unwrap_or(raw_split);
        let split = mapped.parse().map_err(|_| DatasetError::UnknownSplit {
            line,
            value: mapped.clone(),
        })?;
        records.push(DatasetRecord {
            id,
            prompt,
            story,
            split,
        });
    }
    Ok(records)
}

/// Mean/median token lengths for one split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub count: usize,
    pub mean_input_tokens: f64,
    pub median_input_tokens: f64,
    pub mean_target_tokens: f64,
    pub median_target_tokens: f64,
}

/// Whitespace-token statistics per split and overall.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_split: HashMap<Split, SplitStats>,
    pub overall: SplitStats,
}

fn median(sorted: &[usize]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    }
}

fn split_stats(records: &[&DatasetRecord]) -> SplitStats {
    let mut inputs: Vec<usize> = records.iter().map(|r| whitespace_token_count(&r.prompt)).collect();
    let mut targets: Vec<usize> = records.iter().map(|r| whitespace_token_count(&r.story)).collect();
    inputs.sort_unstable();
    targets.sort_unstable();
    let n = records.len();
    SplitStats {
        count: n,
        mean_input_tokens: inputs.iter().sum::<usize>() as f64 / n as f64,
        median_input_tokens: median(&inputs),
        mean_target_tokens: targets.iter().sum::<usize>() as f64 / n as f64,
        median_target_tokens: median(&targets),
    }
}

/// Per-split counts plus mean/median whitespace-token lengths of prompts
/// and stories.
pub fn corpus_stats(records: &[DatasetRecord]) -> Result<CorpusStats, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let mut per_split = HashMap::new();
    for split in ALL_SPLITS {
        let subset: Vec<&DatasetRecord> = records.iter().filter(|r| r.split == split).collect();
        if !subset.is_empty() {
            per_split.insert(split, split_stats(&subset));
        }
    }
    let all: Vec<&DatasetRecord> = records.iter().collect();
    Ok(CorpusStats {
        per_split,
        overall: split_stats(&all),
    })
}
