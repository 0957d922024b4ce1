//! Python bindings for the storycrew pipeline: scratchpad, agent prompts,
//! orchestration against mock backends, surface metrics, judge harness, and
//! ranking statistics.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::collections::HashMap;

use storycrew::judge;
use storycrew::label::AgentLabel;
use storycrew::metrics;
use storycrew::orchestrator::{self, OrchestratorConfig, Variant};
use storycrew::ranking;
use storycrew::synthdata;
use storycrew::{IdentifierStyle, ScriptedBackend, TemplateSet};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_label(name: &str) -> PyResult<AgentLabel> {
    name.parse().map_err(err)
}

/// Append-only, label-keyed shared memory of a story-writing run.
#[pyclass(name = "Scratchpad", skip_from_py_object)]
#[derive(Clone)]
struct PyScratchpad {
    inner: storycrew::Scratchpad,
}

#[pymethods]
impl PyScratchpad {
    /// Initialize with the writing task as the sole entry.
    #[new]
    fn new(task: &str) -> PyResult<Self> {
        Ok(Self {
            inner: storycrew::Scratchpad::init(task).map_err(err)?,
        })
    }

    /// Return a new scratchpad with (label, text) appended.
    fn append(&self, label: &str, text: &str) -> PyResult<Self> {
        let label = parse_label(label)?;
        Ok(Self {
            inner: self.inner.append_text(label, text).map_err(err)?,
        })
    }

    /// Canonical text rendering.
    fn render(&self) -> PyResult<String> {
        self.inner.render().map_err(err)
    }

    /// Parse a canonical rendering back into a scratchpad.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: storycrew::Scratchpad::parse(text).map_err(err)?,
        })
    }

    /// Labels in insertion order.
    fn labels(&self) -> Vec<String> {
        self.inner.labels().map(|l| l.name().to_string()).collect()
    }

    /// Text of one entry, if present.
    fn get(&self, label: &str) -> PyResult<Option<String>> {
        Ok(self.inner.get(parse_label(label)?).map(|t| t.to_string()))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Scratchpad({})", self.labels().join(", "))
    }
}

/// Canonical display header of an agent label.
#[pyfunction]
fn label_header(label: &str) -> PyResult<String> {
    Ok(parse_label(label)?.header().to_string())
}

/// All agent labels in canonical order.
#[pyfunction]
fn all_labels() -> Vec<String> {
    storycrew::ALL_LABELS.iter().map(|l| l.name().to_string()).collect()
}

/// Render the prompt an agent would receive over this scratchpad.
#[pyfunction]
fn render_agent_prompt(label: &str, scratchpad: &PyScratchpad) -> PyResult<String> {
    storycrew::render_agent_prompt(parse_label(label)?, &scratchpad.inner, &TemplateSet::default())
        .map_err(err)
}

/// Phrase the scratchpad identifiers ("flat" or "grouped" style).
#[pyfunction]
fn identifiers_phrase(scratchpad: &PyScratchpad, style: &str) -> PyResult<String> {
    let style = match style {
        "flat" => IdentifierStyle::Flat,
        "grouped" => IdentifierStyle::Grouped,
        other => return Err(err(format!("unknown style: {other} (expected flat|grouped)"))),
    };
    Ok(storycrew::identifiers_phrase(&scratchpad.inner, style))
}

/// Next agent the orchestrator would call for this variant, or None.
#[pyfunction]
fn next_agent(scratchpad: &PyScratchpad, variant: &str) -> PyResult<Option<String>> {
    let variant: Variant = variant.parse().map_err(err)?;
    Ok(orchestrator::next_agent(&scratchpad.inner, variant)
        .map_err(err)?
        .map(|l| l.name().to_string()))
}

/// Run a full orchestrated generation against a scripted mock backend whose
/// responses are keyed by agent label. Returns a dict with the story, the
/// rendered scratchpad, per-step records, and the budget flag.
#[pyfunction]
#[pyo3(signature = (task, variant, responses, max_steps = 16))]
fn run_scripted<'py>(
    py: Python<'py>,
    task: &str,
    variant: &str,
    responses: HashMap<String, String>,
    max_steps: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let variant: Variant = variant.parse().map_err(err)?;
    let mut script = HashMap::new();
    for (name, text) in responses {
        script.insert(parse_label(&name)?, text);
    }
    let backend = if script.is_empty() {
        ScriptedBackend::tagging()
    } else {
        ScriptedBackend::new(script)
    };
    let mut config = OrchestratorConfig::new(variant);
    config.max_steps = max_steps;
    config.default_route = "scripted".into();
    let trace = orchestrator::run_with(task, &config, Box::new(backend), &TemplateSet::default())
        .map_err(err)?;

    let out = PyDict::new(py);
    out.set_item("story", &trace.story)?;
    out.set_item("scratchpad", trace.final_scratchpad.render().map_err(err)?)?;
    out.set_item("step_budget_exhausted", trace.step_budget_exhausted)?;
    let steps: Vec<Bound<'py, PyDict>> = trace
        .steps
        .iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("index", s.index)?;
            d.set_item("label", s.label.name())?;
            d.set_item("prompt", &s.prompt)?;
            d.set_item("output", &s.output)?;
            Ok(d)
        })
        .collect::<PyResult<_>>()?;
    out.set_item("steps", steps)?;
    Ok(out)
}

/// Smallest input-token bucket that fits `token_count`.
#[pyfunction]
fn choose_input_bucket(token_count: usize) -> PyResult<usize> {
    storycrew::choose_input_bucket(token_count).map_err(err)
}

/// Conservative token estimate used for bucketing.
#[pyfunction]
fn estimate_tokens(text: &str) -> usize {
    storycrew::estimate_tokens(text)
}

/// Per-story surface metrics as a dict.
#[pyfunction]
#[pyo3(signature = (story, prompt, reference = None))]
fn compute_surface_metrics<'py>(
    py: Python<'py>,
    story: &str,
    prompt: &str,
    reference: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let m = metrics::compute_surface_metrics(story, prompt, reference).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("words", m.words)?;
    out.set_item("sentences", m.sentences)?;
    out.set_item("paragraphs", m.paragraphs)?;
    out.set_item("article_start", m.article_start)?;
    out.set_item("pronoun_start", m.pronoun_start)?;
    out.set_item("unique_words", m.unique_words)?;
    out.set_item("intra_rep", m.intra_rep)?;
    out.set_item("prompt_overlap", m.prompt_overlap)?;
    out.set_item("distinct_trigrams", m.distinct_trigrams)?;
    out.set_item("total_trigrams", m.total_trigrams)?;
    out.set_item("rouge_l_f", m.rouge_l_f)?;
    Ok(out)
}

#[pyfunction]
fn intra_trigram_repetition(story: &str) -> f64 {
    metrics::intra_trigram_repetition(story)
}

#[pyfunction]
fn inter_trigram_repetition(stories: Vec<String>) -> PyResult<f64> {
    metrics::inter_trigram_repetition(&stories).map_err(err)
}

#[pyfunction]
fn prompt_overlap(story: &str, prompt: &str) -> f64 {
    metrics::prompt_overlap(story, prompt)
}

/// Rouge-L (precision, recall, F1) over word tokens.
#[pyfunction]
fn rouge_l(candidate: &str, reference: &str) -> PyResult<(f64, f64, f64)> {
    let r = metrics::rouge_l(candidate, reference).map_err(err)?;
    Ok((r.precision, r.recall, r.f1))
}

/// Side-by-side judge prompt over two stories.
#[pyfunction]
fn build_judge_prompt(story_a: &str, story_b: &str) -> PyResult<String> {
    judge::build_judge_prompt(story_a, story_b, &TemplateSet::default()).map_err(err)
}

/// Parse judge output into {"plot": "A", ..., "overall": "Same"}.
#[pyfunction]
fn parse_verdict(judge_output: &str) -> PyResult<HashMap<&'static str, String>> {
    let v = judge::parse_verdict(judge_output).map_err(err)?;
    Ok(HashMap::from([
        ("plot", v.plot.to_string()),
        ("creativity", v.creativity.to_string()),
        ("development", v.development.to_string()),
        ("language_use", v.language_use.to_string()),
        ("overall", v.overall.to_string()),
    ]))
}

/// Schedule every unordered system pair once per prompt. Returns tuples of
/// (prompt_id, system_i, system_j, i_is_story_a).
#[pyfunction]
fn schedule_pairs(
    systems: Vec<String>,
    prompt_ids: Vec<String>,
    seed: u64,
) -> PyResult<Vec<(String, String, String, bool)>> {
    let tasks = judge::schedule_pairs(&systems, &prompt_ids, seed).map_err(err)?;
    Ok(tasks
        .into_iter()
        .map(|t| (t.prompt_id, t.system_i, t.system_j, t.i_is_story_a))
        .collect())
}

/// Fit Bradley-Terry strengths from a wins matrix (row beats column).
/// Returns {system: strength}, strengths summing to one.
#[pyfunction]
#[pyo3(signature = (systems, wins, epsilon = 0.1, tol = 1e-9, max_iter = 10_000))]
fn fit_bradley_terry(
    systems: Vec<String>,
    wins: Vec<Vec<f64>>,
    epsilon: f64,
    tol: f64,
    max_iter: usize,
) -> PyResult<HashMap<String, f64>> {
    let matrix = ranking::WinsMatrix {
        dimension: judge::Dimension::Overall,
        systems,
        wins,
    };
    let fit = ranking::fit_bradley_terry(&matrix, epsilon, tol, max_iter).map_err(err)?;
    Ok(fit.systems.into_iter().zip(fit.strengths).collect())
}

/// Fleiss' kappa over an item-by-rater table of categorical labels.
#[pyfunction]
fn fleiss_kappa(table: Vec<Vec<String>>) -> PyResult<f64> {
    ranking::fleiss_kappa(&table).map_err(err)
}

/// Spearman rank correlation with average ties.
#[pyfunction]
fn spearman_rho(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    ranking::spearman_rho(&x, &y).map_err(err)
}

/// Assign items (id, prompt_id) to raters so nobody sees a prompt twice or
/// exceeds the cap. Returns {rater: [item ids]}.
#[pyfunction]
fn latin_square_assign(
    raters: Vec<String>,
    items: Vec<(String, String)>,
    per_rater_cap: usize,
) -> PyResult<HashMap<String, Vec<String>>> {
    let items: Vec<ranking::EvalItem> = items
        .into_iter()
        .map(|(id, prompt_id)| ranking::EvalItem { id, prompt_id })
        .collect();
    let assignment = ranking::latin_square_assign(&raters, &items, per_rater_cap).map_err(err)?;
    Ok(assignment.per_rater)
}

fn gold(prompt: &str, story: &str) -> synthdata::GoldExample {
    synthdata::GoldExample {
        id: "py".into(),
        prompt: prompt.to_string(),
        story: story.to_string(),
        split: storycrew::dataset::Split::Train,
    }
}

/// Teacher prompt for one planning agent over a gold (prompt, story) pair.
#[pyfunction]
fn build_planning_target_prompt(agent: &str, prompt: &str, story: &str) -> PyResult<String> {
    synthdata::build_planning_target_prompt(parse_label(agent)?, &gold(prompt, story), &TemplateSet::default())
        .map_err(err)
}

/// Teacher prompt asking to split a gold story into its five sections.
#[pyfunction]
fn build_story_split_prompt(prompt: &str, story: &str) -> PyResult<String> {
    synthdata::build_story_split_prompt(&gold(prompt, story), &TemplateSet::default()).map_err(err)
}

/// Parse a teacher split response into [(section, start, end)] byte spans.
#[pyfunction]
fn parse_split_response(teacher_output: &str, story: &str) -> PyResult<Vec<(String, usize, usize)>> {
    let split = synthdata::parse_split_response(teacher_output, story).map_err(err)?;
    Ok(split
        .spans
        .iter()
        .map(|(l, s, e)| (l.name().to_string(), *s, *e))
        .collect())
}

#[pymodule]
fn storycrew_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScratchpad>()?;
    m.add_function(wrap_pyfunction!(label_header, m)?)?;
    m.add_function(wrap_pyfunction!(all_labels, m)?)?;
    m.add_function(wrap_pyfunction!(render_agent_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(identifiers_phrase, m)?)?;
    m.add_function(wrap_pyfunction!(next_agent, m)?)?;
    m.add_function(wrap_pyfunction!(run_scripted, m)?)?;
    m.add_function(wrap_pyfunction!(choose_input_bucket, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(compute_surface_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(intra_trigram_repetition, m)?)?;
    m.add_function(wrap_pyfunction!(inter_trigram_repetition, m)?)?;
    m.add_function(wrap_pyfunction!(prompt_overlap, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l, m)?)?;
    m.add_function(wrap_pyfunction!(build_judge_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(parse_verdict, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(fit_bradley_terry, m)?)?;
    m.add_function(wrap_pyfunction!(fleiss_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(spearman_rho, m)?)?;
    m.add_function(wrap_pyfunction!(latin_square_assign, m)?)?;
    m.add_function(wrap_pyfunction!(build_planning_target_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(build_story_split_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(parse_split_response, m)?)?;
    Ok(())
}
