//! Surface and reference-based story metrics: word/paragraph counts,
//! sentence-opener rates, unique-word ratio, trigram repetition within and
//! across stories, prompt overlap, and Rouge-L.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("story is empty")]
    EmptyStory,
    #[error("input text is empty")]
    EmptyInput,
    #[error("inter-story repetition needs at least two stories")]
    TooFewStories,
}

/// Articles counted for sentence openers.
pub const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Personal, possessive, and demonstrative pronouns counted for sentence
/// openers.
pub const PRONOUNS: [&str; 27] = [
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them", "my", "your",
    "his", "its", "our", "their", "mine", "yours", "hers", "ours", "theirs", "this", "that",
    "these", "those",
];

/// Raw whitespace-token count, the corpus-statistics tokenizer.
pub fn whitespace_token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn strip_punct(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Lowercased word tokens: whitespace split, outer punctuation stripped,
/// empty residues dropped.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(strip_punct)
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Word count before lowercasing: whitespace tokens with alphanumeric content.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace()
        .map(strip_punct)
        .filter(|t| !t.is_empty())
        .count()
}

const CLOSERS: [char; 7] = ['"', '\'', '\u{201d}', '\u{2019}', ')', ']', '\u{00bb}'];

/// Split into sentences at `.`/`!`/`?` followed by whitespace or the end of
/// text; closing quotes and brackets stay with the preceding sentence.
pub fn sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        if matches!(chars[i], '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && CLOSERS.contains(&chars[j]) {
                j += 1;
            }
            if j >= chars.len() || chars[j].is_whitespace() {
                let sentence: String = chars[start..j].iter().collect();
                let sentence = sentence.trim();
                if !sentence.is_empty() {
                    out.push(sentence.to_string());
                }
                start = j;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    let tail: String = chars[start..].iter().collect();
    let tail = tail.trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

/// Maximal runs of non-blank lines.
pub fn paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        out.push(current.join("\n"));
    }
    out
}

/// Deterministic tokenization views over one story.
#[derive(Debug, Clone)]
pub struct TokenizedStory {
    pub raw: String,
    pub words: Vec<String>,
    pub sentences: Vec<String>,
    pub paragraphs: Vec<String>,
}

impl TokenizedStory {
    pub fn new(raw: &str) -> Self {
        Self {
            raw: raw.to_string(),
            words: word_tokens(raw),
            sentences: sentences(raw),
            paragraphs: paragraphs(raw),
        }
    }
}

fn trigrams(words: &[String]) -> Vec<(&str, &str, &str)> {
    words
        .windows(3)
        .map(|w| (w[0].as_str(), w[1].as_str(), w[2].as_str()))
        .collect()
}

/// Percent of repeated word trigrams within one story:
/// `100 * (1 - distinct/total)`, 0 when fewer than three words.
pub fn intra_trigram_repetition(story: &str) -> f64 {
    let words = word_tokens(story);
    let grams = trigrams(&words);
    if grams.is_empty() {
        return 0.0;
    }
    let distinct: HashSet<_> = grams.iter().collect();
    100.0 * (1.0 - distinct.len() as f64 / grams.len() as f64)
}

/// Mean over stories of the percent of each story's distinct trigrams that
/// appear in at least one other story.
pub fn inter_trigram_repetition(stories: &[String]) -> Result<f64, MetricsError> {
    if stories.len() < 2 {
        return Err(MetricsError::TooFewStories);
    }
    let token_sets: Vec<Vec<String>> = stories.iter().map(|s| word_tokens(s)).collect();
    let gram_sets: Vec<HashSet<(&str, &str, &str)>> = token_sets
        .iter()
        .map(|w| trigrams(w).into_iter().collect())
        .collect();
    // Count, for each distinct trigram, how many stories contain it; a
    // trigram is shared for a story iff it appears in >= 2 stories total.
    let mut story_counts: HashMap<(&str, &str, &str), usize> = HashMap::new();
    for set in &gram_sets {
        for g in set {
            *story_counts.entry(*g).or_insert(0) += 1;
        }
    }
    let mut per_story = Vec::with_capacity(stories.len());
    for set in &gram_sets {
        if set.is_empty() {
            per_story.push(0.0);
            continue;
        }
        let shared = set.iter().filter(|g| story_counts[*g] >= 2).count();
        per_story.push(100.0 * shared as f64 / set.len() as f64);
    }
    Ok(per_story.iter().sum::<f64>() / per_story.len() as f64)
}

/// Fraction of the story's trigram occurrences that also occur as trigrams
/// of the prompt.
pub fn prompt_overlap(story: &str, prompt: &str) -> f64 {
    let story_words = word_tokens(story);
    let story_grams = trigrams(&story_words);
    if story_grams.is_empty() {
        return 0.0;
    }
    let prompt_words = word_tokens(prompt);
    let prompt_grams: HashSet<_> = trigrams(&prompt_words).into_iter().collect();
    if prompt_grams.is_empty() {
        return 0.0;
    }
    let hits = story_grams.iter().filter(|g| prompt_grams.contains(*g)).count();
    hits as f64 / story_grams.len() as f64
}

/// Rouge-L scores over word tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeL {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    // Two-row dynamic program over token sequences.
    let mut prev = vec![0usize; b.len() + 1];
    let mut row = vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            row[j + 1] = if ai == bj {
                prev[j] + 1
            } else {
                row[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

/// Longest-common-subsequence precision/recall/F1 of `candidate` against
/// `reference`: precision normalizes by the reference length, recall by the
/// candidate length.
pub fn rouge_l(candidate: &str, reference: &str) -> Result<RougeL, MetricsError> {
    let cand = word_tokens(candidate);
    let refr = word_tokens(reference);
    if cand.is_empty() || refr.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let lcs = lcs_len(&cand, &refr) as f64;
    let precision = lcs / refr.len() as f64;
    let recall = lcs / cand.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(RougeL {
        precision,
        recall,
        f1,
    })
}

/// Per-story surface statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMetrics {
    pub words: usize,
    pub sentences: usize,
    pub paragraphs: usize,
    /// Percent of sentences starting with an article.
    pub article_start: f64,
    /// Percent of sentences starting with a pronoun.
    pub pronoun_start: f64,
    /// Percent of distinct lowercased words.
    pub unique_words: f64,
    /// Percent of repeated trigrams within the story.
    pub intra_rep: f64,
    /// Fraction of story trigram occurrences present in the prompt.
    pub prompt_overlap: f64,
    /// Raw trigram counts so either a type- or token-based repetition
    /// convention can be recomputed from the report.
    pub distinct_trigrams: usize,
    pub total_trigrams: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge_l_f: Option<f64>,
    /// Reserved for an external embedding-based scorer.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bert_score: Option<f64>,
}

/// Compute every per-story metric. `reference` enables Rouge-L.
pub fn compute_surface_metrics(
    story: &str,
    prompt: &str,
    reference: Option<&str>,
) -> Result<SurfaceMetrics, MetricsError> {
    if story.trim().is_empty() {
        return Err(MetricsError::EmptyStory);
    }
    let tok = TokenizedStory::new(story);
    let sentence_count = tok.sentences.len();
    let first_words: Vec<Option<String>> = tok
        .sentences
        .iter()
        .map(|s| word_tokens(s).into_iter().next())
        .collect();
    let starters = |set: &[&str]| -> f64 {
        if sentence_count == 0 {
            return 0.0;
        }
        let hits = first_words
            .iter()
            .filter(|w| w.as_deref().is_some_and(|w| set.contains(&w)))
            .count();
        100.0 * hits as f64 / sentence_count as f64
    };
    let unique_words = if tok.words.is_empty() {
        0.0
    } else {
        let distinct: HashSet<&String> = tok.words.iter().collect();
        100.0 * distinct.len() as f64 / tok.words.len() as f64
    };
    let grams = trigrams(&tok.words);
    let distinct_trigrams = grams.iter().collect::<HashSet<_>>().len();
    let rouge_l_f = match reference {
        Some(r) => Some(rouge_l(story, r)?.f1),
        None => None,
    };
    Ok(SurfaceMetrics {
        words: word_count(story),
        sentences: sentence_count,
        paragraphs: tok.paragraphs.len(),
        article_start: starters(&ARTICLES),
        pronoun_start: starters(&PRONOUNS),
        unique_words,
        intra_rep: intra_trigram_repetition(story),
        prompt_overlap: prompt_overlap(story, prompt),
        distinct_trigrams,
        total_trigrams: grams.len(),
        rouge_l_f,
        bert_score: None,
    })
}

/// One story's metrics inside a corpus report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoryReport {
    pub id: String,
    #[serde(flatten)]
    pub metrics: SurfaceMetrics,
}

/// Arithmetic means of the per-story metrics.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricMeans {
    pub words: f64,
    pub sentences: f64,
    pub paragraphs: f64,
    pub article_start: f64,
    pub pronoun_start: f64,
    pub unique_words: f64,
    pub intra_rep: f64,
    pub prompt_overlap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge_l_f: Option<f64>,
}

/// Per-system corpus report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusReport {
    pub system: String,
    pub per_story: Vec<StoryReport>,
    pub means: MetricMeans,
    /// Percent of each story's distinct trigrams shared with any other
    /// story, averaged; requires at least two stories.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inter_rep: Option<f64>,
}

/// One story with its prompt and optional reference.
#[derive(Debug, Clone)]
pub struct ScoredStory {
    pub id: String,
    pub story: String,
    pub prompt: String,
    pub reference: Option<String>,
}

/// Compute per-story metrics, their means, and inter-story repetition.
pub fn corpus_report(system: &str, stories: &[ScoredStory]) -> Result<CorpusReport, MetricsError> {
    if stories.is_empty() {
        return Err(MetricsError::EmptyStory);
    }
    let mut per_story = Vec::with_capacity(stories.len());
    for s in stories {
        let metrics = compute_surface_metrics(&s.story, &s.prompt, s.reference.as_deref())?;
        per_story.push(StoryReport {
            id: s.id.clone(),
            metrics,
        });
    }
    let n = per_story.len() as f64;
    let mean = |f: &dyn Fn(&SurfaceMetrics) -> f64| per_story.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
    let rouge_values: Vec<f64> = per_story.iter().filter_map(|r| r.metrics.rouge_l_f).collect();
    let means = MetricMeans {
        words: mean(&|m| m.words as f64),
        sentences: mean(&|m| m.sentences as f64),
        paragraphs: mean(&|m| m.paragraphs as f64),
        article_start: mean(&|m| m.article_start),
        pronoun_start: mean(&|m| m.pronoun_start),
        unique_words: mean(&|m| m.unique_words),
        intra_rep: mean(&|m| m.intra_rep),
        prompt_overlap: mean(&|m| m.prompt_overlap),
        rouge_l_f: if rouge_values.len() == per_story.len() {
            Some(rouge_values.iter().sum::<f64>() / n)
        } else {
            None
        },
    };
    let texts: Vec<String> = stories.iter().map(|s| s.story.clone()).collect();
    let inter_rep = inter_trigram_repetition(&texts).ok();
    Ok(CorpusReport {
        system: system.to_string(),
        per_story,
        means,
        inter_rep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn hand_enumerated_five_token_story() {
        let m = compute_surface_metrics("The cat sat. He slept.", "irrelevant prompt", None).unwrap();
        assert_eq!(m.words, 5);
        assert_eq!(m.sentences, 2);
        assert_abs_diff_eq!(m.article_start, 50.0);
        assert_abs_diff_eq!(m.pronoun_start, 50.0);
        assert_abs_diff_eq!(m.unique_words, 100.0);
    }

    #[test]
    fn blank_line_separates_paragraphs() {
        let m = compute_surface_metrics("para one\n\npara two", "p", None).unwrap();
        assert_eq!(m.paragraphs, 2);
    }

    #[test]
    fn empty_story_is_rejected() {
        assert_eq!(
            compute_surface_metrics("  ", "p", None).unwrap_err(),
            MetricsError::EmptyStory
        );
    }

    #[test]
    fn sentence_splitter_keeps_closing_quotes() {
        let s = sentences("\u{201c}Stop!\u{201d} she said. He left.");
        assert_eq!(s, vec!["\u{201c}Stop!\u{201d}", "she said.", "He left."]);
    }

    #[test]
    fn sentence_splitter_ignores_inline_periods() {
        let s = sentences("Dr. Brooks arrived at 3.5 mph. Done.");
        // "Dr." ends with period+space, so it splits there; decimals do not.
        assert_eq!(s.len(), 3);
        assert_eq!(s[1], "Brooks arrived at 3.5 mph.");
    }

    #[test]
    fn intra_repetition_hand_example() {
        assert_abs_diff_eq!(intra_trigram_repetition("a b c a b c"), 25.0);
    }

    #[test]
    fn intra_repetition_degenerate_input() {
        assert_abs_diff_eq!(intra_trigram_repetition("two words"), 0.0);
        assert_abs_diff_eq!(intra_trigram_repetition(""), 0.0);
    }

    #[test]
    fn inter_repetition_identical_and_disjoint() {
        let twins = vec!["a b c d".to_string(), "a b c d".to_string()];
        assert_abs_diff_eq!(inter_trigram_repetition(&twins).unwrap(), 100.0);
        let disjoint = vec!["a b c d".to_string(), "e f g h".to_string()];
        assert_abs_diff_eq!(inter_trigram_repetition(&disjoint).unwrap(), 0.0);
        assert_eq!(
            inter_trigram_repetition(&twins[..1].to_vec()).unwrap_err(),
            MetricsError::TooFewStories
        );
    }

    #[test]
    fn overlap_identity_and_disjoint() {
        assert_abs_diff_eq!(prompt_overlap("a b c d", "a b c d"), 1.0);
        assert_abs_diff_eq!(prompt_overlap("a b c d", "e f g h"), 0.0);
        assert_abs_diff_eq!(prompt_overlap("a b c d", "so"), 0.0);
    }

    #[test]
    fn rouge_identity_and_disjoint() {
        assert_abs_diff_eq!(rouge_l("x y z", "x y z").unwrap().f1, 1.0);
        assert_abs_diff_eq!(rouge_l("x y z", "p q r").unwrap().f1, 0.0);
        assert_eq!(rouge_l("", "x").unwrap_err(), MetricsError::EmptyInput);
    }

    #[test]
    fn rouge_hand_computed_lcs_table() {
        let r = rouge_l("the cat sat", "the cat").unwrap();
        assert_abs_diff_eq!(r.precision, 1.0);
        assert_abs_diff_eq!(r.recall, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.f1, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn word_count_strips_pure_punctuation() {
        assert_eq!(word_count("hello -- world"), 2);
        assert_eq!(word_tokens("Hello, World!"), vec!["hello", "world"]);
    }

    #[test]
    fn corpus_means_are_arithmetic_averages() {
        let stories = vec![
            ScoredStory {
                id: "1".into(),
                story: "a b c d e f".into(),
                prompt: "p".into(),
                reference: None,
            },
            ScoredStory {
                id: "2".into(),
                story: "g h".into(),
                prompt: "p".into(),
                reference: None,
            },
        ];
        let report = corpus_report("sys", &stories).unwrap();
        assert_abs_diff_eq!(report.means.words, 4.0);
        assert_eq!(report.per_story.len(), 2);
    }

    // Independent oracles for the property tests below.

    fn oracle_intra(story: &str) -> f64 {
        let w = word_tokens(story);
        if w.len() < 3 {
            return 0.0;
        }
        let mut seen: Vec<Vec<&String>> = Vec::new();
        let mut total = 0;
        for i in 0..=(w.len() - 3) {
            let g = vec![&w[i], &w[i + 1], &w[i + 2]];
            if !seen.contains(&g) {
                seen.push(g);
            }
            total += 1;
        }
        100.0 * (1.0 - seen.len() as f64 / total as f64)
    }

    fn oracle_lcs(a: &[String], b: &[String]) -> usize {
        // Plain recursion with memo table, distinct from the two-row DP.
        fn go(a: &[String], b: &[String], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
            if i == a.len() || j == b.len() {
                return 0;
            }
            if let Some(&v) = memo.get(&(i, j)) {
                return v;
            }
            let v = if a[i] == b[j] {
                1 + go(a, b, i + 1, j + 1, memo)
            } else {
                go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
            };
            memo.insert((i, j), v);
            v
        }
        go(a, b, 0, 0, &mut HashMap::new())
    }

    fn small_text() -> impl Strategy<Value = String> {
        proptest::collection::vec(proptest::sample::select(vec!["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]), 0..50)
            .prop_map(|v| v.join(" "))
    }

    proptest! {
        #[test]
        fn intra_matches_oracle(s in small_text()) {
            prop_assert!((intra_trigram_repetition(&s) - oracle_intra(&s)).abs() < 1e-12);
        }

        #[test]
        fn ranges_hold_for_arbitrary_input(s in "\\PC{0,200}", p in "\\PC{0,100}") {
            let intra = intra_trigram_repetition(&s);
            prop_assert!((0.0..=100.0).contains(&intra));
            let overlap = prompt_overlap(&s, &p);
            prop_assert!((0.0..=1.0).contains(&overlap));
        }

        #[test]
        fn doubling_never_decreases_intra(s in small_text()) {
            let doubled = format!("{s} {s}");
            prop_assert!(intra_trigram_repetition(&doubled) >= intra_trigram_repetition(&s) - 1e-12);
        }

        #[test]
        fn rouge_swap_duality(a in small_text(), b in small_text()) {
            prop_assume!(!word_tokens(&a).is_empty() && !word_tokens(&b).is_empty());
            let ab = rouge_l(&a, &b).unwrap();
            let ba = rouge_l(&b, &a).unwrap();
            prop_assert!((ab.precision - ba.recall).abs() < 1e-12);
            prop_assert!((ab.f1 - ba.f1).abs() < 1e-12);
        }

        #[test]
        fn lcs_matches_independent_oracle(a in small_text(), b in small_text()) {
            let at = word_tokens(&a);
            let bt = word_tokens(&b);
            prop_assert_eq!(lcs_len(&at, &bt), oracle_lcs(&at, &bt));
        }

        #[test]
        fn inter_repetition_matches_pairwise_oracle(
            texts in proptest::collection::vec(small_text(), 2..6)
        ) {
            let got = inter_trigram_repetition(&texts).unwrap();
            // O(n^2) oracle: per story, scan every other story's trigram set.
            let sets: Vec<HashSet<(String, String, String)>> = texts
                .iter()
                .map(|t| {
                    let w = word_tokens(t);
                    w.windows(3)
                        .map(|g| (g[0].clone(), g[1].clone(), g[2].clone()))
                        .collect()
                })
                .collect();
            let mut acc = 0.0;
            for (i, set) in sets.iter().enumerate() {
                if set.is_empty() {
                    continue;
                }
                let shared = set
                    .iter()
                    .filter(|g| sets.iter().enumerate().any(|(j, other)| j != i && other.contains(*g)))
                    .count();
                acc += 100.0 * shared as f64 / set.len() as f64;
            }
            let expected = acc / texts.len() as f64;
            prop_assert!((got - expected).abs() < 1e-9);
        }
    }
}
