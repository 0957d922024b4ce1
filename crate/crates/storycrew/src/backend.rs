//! Text-generation backends: a minimal HTTP completion client plus
//! deterministic mocks for replayable runs, with input-token bucketing.

use crate::label::AgentLabel;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;
use thiserror::Error;

/// Allowed input-token budgets, smallest first.
pub const INPUT_BUCKETS: [usize; 4] = [1024, 2048, 4096, 8192];

/// Default target token length for generated sections.
pub const DEFAULT_MAX_OUTPUT_TOKENS: usize = 4096;

/// Whitespace-token count scaled by a 1.3 safety factor, rounded up.
/// Model tokenizers are unknown, so the budget is deliberately conservative.
pub fn estimate_tokens(text: &str) -> usize {
    let words = text.split_whitespace().count();
    (words as f64 * 1.3).ceil() as usize
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("input of {tokens} tokens exceeds the largest bucket ({max})", max = INPUT_BUCKETS[3])]
    InputTooLong { tokens: usize },
    #[error("auth environment variable {0} is not set")]
    AuthMissing(String),
    #[error("backend {profile} unavailable after {attempts} attempts: {reason}")]
    BackendUnavailable {
        profile: String,
        attempts: u32,
        reason: String,
    },
    #[error("scripted backend has no response for the agent exercised by this prompt")]
    ScriptMiss,
    #[error("no backend profile named {0}")]
    UnknownProfile(String),
    #[error("profile {0}: {1}")]
    InvalidProfile(String, String),
    #[error("failed to read profiles file {path}: {reason}")]
    ProfilesFile { path: String, reason: String },
}

/// Pick the smallest bucket that fits `token_count`.
pub fn choose_input_bucket(token_count: usize) -> Result<usize, BackendError> {
    INPUT_BUCKETS
        .iter()
        .copied()
        .find(|&b| token_count <= b)
        .ok_or(BackendError::InputTooLong {
            tokens: token_count,
        })
}

/// One generation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_input_tokens: usize,
    pub max_output_tokens: usize,
    pub temperature: Option<f64>,
    pub seed: Option<u64>,
}

impl GenerationRequest {
    /// Build a request, bucketing the prompt's estimated token count.
    pub fn new(prompt: &str) -> Result<Self, BackendError> {
        if prompt.trim().is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let max_input_tokens = choose_input_bucket(estimate_tokens(prompt))?;
        Ok(Self {
            prompt: prompt.to_string(),
            max_input_tokens,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            temperature: None,
            seed: None,
        })
    }

    pub fn with_max_output_tokens(mut self, n: usize) -> Self {
        self.max_output_tokens = n.max(1);
        self
    }

    pub fn with_sampling(mut self, temperature: Option<f64>, seed: Option<u64>) -> Self {
        self.temperature = temperature;
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub input_tokens: usize,
    pub output_tokens: usize,
}

/// A text-generation service. Implementations must tolerate concurrent calls.
pub trait TextBackend: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, BackendError>;

    fn name(&self) -> &str;
}

fn validate(req: &GenerationRequest) -> Result<(), BackendError> {
    if req.prompt.trim().is_empty() {
        return Err(BackendError::EmptyPrompt);
    }
    let tokens = estimate_tokens(&req.prompt);
    if tokens > req.max_input_tokens {
        return Err(BackendError::InputTooLong { tokens });
    }
    Ok(())
}

fn respond(text: String, req: &GenerationRequest) -> GenerationResponse {
    GenerationResponse {
        input_tokens: estimate_tokens(&req.prompt),
        output_tokens: estimate_tokens(&text),
        text,
    }
}

/// Slice `text` after its first `max_tokens` whitespace tokens, preserving
/// the original spacing of what remains.
fn truncate_to_tokens(text: &str, max_tokens: usize) -> &str {
    let mut seen = 0usize;
    let mut end = text.len();
    let mut iter = text.char_indices().peekable();
    let mut in_token = false;
    while let Some((i, c)) = iter.next() {
        if c.is_whitespace() {
            in_token = false;
        } else if !in_token {
            in_token = true;
            seen += 1;
            if seen > max_tokens {
                end = i;
                break;
            }
        }
        let _ = i;
    }
    text[..end].trim_end()
}

/// Echoes the prompt back, truncated to the output budget.
#[derive(Debug, Default)]
pub struct EchoBackend;

impl TextBackend for EchoBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        validate(req)?;
        let text = truncate_to_tokens(&req.prompt, req.max_output_tokens).to_string();
        Ok(respond(text, req))
    }

    fn name(&self) -> &str {
        "mock-echo"
    }
}

/// Returns a canned response per agent. The agent being exercised is
/// recovered from the prompt itself: it is the first label in canonical
/// order whose header line is absent from the embedded scratchpad and for
/// which a response is configured.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    responses: HashMap<AgentLabel, String>,
}

impl ScriptedBackend {
    pub fn new(responses: HashMap<AgentLabel, String>) -> Self {
        Self { responses }
    }

    /// Respond `out:<LABEL>` for all ten agents.
    pub fn tagging() -> Self {
        let responses = crate::label::ALL_LABELS
            .iter()
            .filter(|l| crate::agents::agent_kind(**l).is_some())
            .map(|l| (*l, format!("out:{l}")))
            .collect();
        Self::new(responses)
    }

    fn agent_for_prompt(&self, prompt: &str) -> Option<AgentLabel> {
        let present: Vec<AgentLabel> = prompt
            .lines()
            .filter_map(|line| {
                let inner = line.strip_prefix('[')?.strip_suffix(']')?;
                AgentLabel::from_header(inner)
            })
            .collect();
        crate::label::ALL_LABELS
            .iter()
            .copied()
            .filter(|l| crate::agents::agent_kind(*l).is_some())
            .find(|l| !present.contains(l) && self.responses.contains_key(l))
    }
}

impl TextBackend for ScriptedBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        validate(req)?;
        let label = self
            .agent_for_prompt(&req.prompt)
            .ok_or(BackendError::ScriptMiss)?;
        Ok(respond(self.responses[&label].clone(), req))
    }

    fn name(&self) -> &str {
        "mock-scripted"
    }
}

/// Deterministic, position-invariant side-by-side judge: prefers the longer
/// story on every dimension, answering Same on equal lengths. Useful for
/// driving the judge pipeline offline.
#[derive(Debug, Default)]
pub struct MockJudgeBackend;

impl MockJudgeBackend {
    fn stories(prompt: &str) -> Option<(&str, &str)> {
        let a_start = prompt.find("[Story A]\n")? + "[Story A]\n".len();
        let b_marker = prompt[a_start..].find("\n\n[Story B]\n")?;
        let a = &prompt[a_start..a_start + b_marker];
        let b_start = a_start + b_marker + "\n\n[Story B]\n".len();
        let b_end = prompt[b_start..]
            .find("\n\n[Assessment]")
            .map(|i| b_start + i)
            .unwrap_or(prompt.len());
        Some((a, &prompt[b_start..b_end]))
    }
}

impl TextBackend for MockJudgeBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        validate(req)?;
        let (a, b) = Self::stories(&req.prompt).ok_or(BackendError::ScriptMiss)?;
        let choice = match a.split_whitespace().count().cmp(&b.split_whitespace().count()) {
            std::cmp::Ordering::Greater => "A",
            std::cmp::Ordering::Less => "B",
            std::cmp::Ordering::Equal => "Same",
        };
        let text = format!(
            "The longer story develops its material further.\n\n\
             Based on my assessment, the better story for each dimension is:\n\n\
             Plot: {choice}\nCreativity: {choice}\nDevelopment: {choice}\n\
             Language Use: {choice}\nOverall: {choice}"
        );
        Ok(respond(text, req))
    }

    fn name(&self) -> &str {
        "mock-judge"
    }
}

/// Deterministic teacher for the backtranslation pipeline: answers the four
/// planning prompts with canned plans and the story-split prompt by cutting
/// the embedded story into five contiguous sentence groups.
#[derive(Debug, Default)]
pub struct MockTeacherBackend;

impl MockTeacherBackend {
    fn embedded_story(prompt: &str) -> Option<&str> {
        let marker = "[User-Written Response]\n";
        let start = prompt.rfind(marker)? + marker.len();
        Some(&prompt[start..])
    }

    fn split_response(story: &str) -> Result<String, BackendError> {
        let sentences = crate::metrics::sentences(story);
        if sentences.len() < 5 {
            return Err(BackendError::ScriptMiss);
        }
        let headers = ["Exposition", "Rising Action", "Climax", "Falling Action", "Resolution"];
        let per = sentences.len().div_ceil(5);
        let mut lines = Vec::with_capacity(5);
        for (i, header) in headers.iter().enumerate() {
            let first = &sentences[(i * per).min(sentences.len() - (5 - i))];
            lines.push(format!("[{header}]: {first}"));
        }
        Ok(lines.join("\n"))
    }
}

impl TextBackend for MockTeacherBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        validate(req)?;
        let prompt = &req.prompt;
        let text = if prompt.starts_with("Split the following story into sections:") {
            let story = Self::embedded_story(prompt).ok_or(BackendError::ScriptMiss)?;
            Self::split_response(story)?
        } else if prompt.contains("describe the central conflict") {
            "The protagonist wants something dearly, an obstacle stands in the way, and \
             every attempt to go around it raises the stakes. They want it because it would \
             restore what they lost. What stops them is the cost of getting it."
                .to_string()
        } else if prompt.contains("describe the characters") {
            "* The protagonist is soft-spoken and wry, wears a weathered coat, and fears \
             being forgotten. * The antagonist is loud, precise, and secretly lonely."
                .to_string()
        } else if prompt.contains("describe the setting") {
            "The story unfolds in a small coastal town over a single autumn week, where fog \
             rolls in each evening and the harbor empties before the storm season."
                .to_string()
        } else if prompt.contains("describe the key plot points") {
            "* An arrival upsets the routine. * A secret surfaces. * The confrontation \
             forces a choice. * The choice costs something. * Life settles into a new shape."
                .to_string()
        } else {
            return Err(BackendError::ScriptMiss);
        };
        Ok(respond(text, req))
    }

    fn name(&self) -> &str {
        "mock-teacher"
    }
}

/// Kind of service behind a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Http,
    MockEcho,
    MockScripted,
    MockJudge,
    MockTeacher,
}

/// A named backend configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendProfile {
    pub name: String,
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_id: Option<String>,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Maximum concurrent requests to this profile.
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// Canned responses for mock-scripted profiles, keyed by agent label.
    #[serde(default)]
    pub responses: HashMap<String, String>,
}

fn default_retries() -> u32 {
    3
}
fn default_timeout_secs() -> u64 {
    120
}
fn default_max_in_flight() -> usize {
    4
}

impl BackendProfile {
    pub fn mock_echo(name: &str) -> Self {
        Self::bare(name, BackendKind::MockEcho)
    }

    pub fn mock_scripted(name: &str, responses: HashMap<String, String>) -> Self {
        let mut p = Self::bare(name, BackendKind::MockScripted);
        p.responses = responses;
        p
    }

    fn bare(name: &str, kind: BackendKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            endpoint: None,
            model_id: None,
            auth_env: None,
            retries: default_retries(),
            timeout_secs: default_timeout_secs(),
            max_in_flight: default_max_in_flight(),
            responses: HashMap::new(),
        }
    }

    /// Instantiate the backend this profile describes.
    pub fn build(&self) -> Result<Box<dyn TextBackend>, BackendError> {
        match self.kind {
            BackendKind::MockEcho => Ok(Box::new(EchoBackend)),
            BackendKind::MockJudge => Ok(Box::new(MockJudgeBackend)),
            BackendKind::MockTeacher => Ok(Box::new(MockTeacherBackend)),
            BackendKind::MockScripted => {
                let mut responses = HashMap::new();
                for (k, v) in &self.responses {
                    let label: AgentLabel = k.parse().map_err(|e: String| {
                        BackendError::InvalidProfile(self.name.clone(), e)
                    })?;
                    responses.insert(label, v.clone());
                }
                if responses.is_empty() {
                    return Ok(Box::new(ScriptedBackend::tagging()));
                }
                Ok(Box::new(ScriptedBackend::new(responses)))
            }
            BackendKind::Http => {
                let endpoint = self.endpoint.clone().ok_or_else(|| {
                    BackendError::InvalidProfile(self.name.clone(), "http profile requires endpoint".into())
                })?;
                let auth_env = self.auth_env.clone().ok_or_else(|| {
                    BackendError::InvalidProfile(self.name.clone(), "http profile requires auth_env".into())
                })?;
                Ok(Box::new(HttpBackend {
                    profile_name: self.name.clone(),
                    endpoint,
                    model_id: self.model_id.clone().unwrap_or_default(),
                    auth_env,
                    retries: self.retries,
                    timeout: Duration::from_secs(self.timeout_secs),
                    gate: Semaphore::new(self.max_in_flight.max(1)),
                }))
            }
        }
    }
}

/// Generate once against a profile. Convenience over `profile.build()`.
pub fn generate(
    profile: &BackendProfile,
    req: &GenerationRequest,
) -> Result<GenerationResponse, BackendError> {
    profile.build()?.generate(req)
}

/// Wire body of the minimal completion call.
#[derive(Serialize)]
struct HttpRequestBody<'a> {
    model_id: &'a str,
    prompt: &'a str,
    max_output_tokens: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct HttpResponseBody {
    text: String,
    #[serde(default)]
    input_tokens: usize,
    #[serde(default)]
    output_tokens: usize,
}

struct Semaphore {
    slots: Mutex<usize>,
    cond: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            slots: Mutex::new(n),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut slots = self.slots.lock().unwrap();
        while *slots == 0 {
            slots = self.cond.wait(slots).unwrap();
        }
        *slots -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.slots.lock().unwrap() += 1;
        self.0.cond.notify_one();
    }
}

/// Minimal HTTP completion client: JSON in, JSON out, bearer auth from the
/// environment, exponential backoff on transient failures.
pub struct HttpBackend {
    profile_name: String,
    endpoint: String,
    model_id: String,
    auth_env: String,
    retries: u32,
    timeout: Duration,
    gate: Semaphore,
}

impl TextBackend for HttpBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        validate(req)?;
        let token = std::env::var(&self.auth_env)
            .map_err(|_| BackendError::AuthMissing(self.auth_env.clone()))?;
        let _slot = self.gate.acquire();

        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| BackendError::BackendUnavailable {
                profile: self.profile_name.clone(),
                attempts: 0,
                reason: e.to_string(),
            })?;
        let body = HttpRequestBody {
            model_id: &self.model_id,
            prompt: &req.prompt,
            max_output_tokens: req.max_output_tokens,
            temperature: req.temperature,
            seed: req.seed,
        };

        let attempts = self.retries + 1;
        let mut last_err = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(250 * (1 << (attempt - 1))));
            }
            let result = client
                .post(&self.endpoint)
                .bearer_auth(&token)
                .json(&body)
                .send();
            match result {
                Ok(resp) if resp.status().is_success() => {
                    let parsed: HttpResponseBody =
                        resp.json().map_err(|e| BackendError::BackendUnavailable {
                            profile: self.profile_name.clone(),
                            attempts: attempt + 1,
                            reason: format!("malformed response body: {e}"),
                        })?;
                    return Ok(GenerationResponse {
                        text: parsed.text,
                        input_tokens: parsed.input_tokens,
                        output_tokens: parsed.output_tokens,
                    });
                }
                Ok(resp) => {
                    let status = resp.status();
                    last_err = format!("http status {status}");
                    // Client errors other than 429 will not improve on retry.
                    if status.is_client_error() && status.as_u16() != 429 {
                        break;
                    }
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(BackendError::BackendUnavailable {
            profile: self.profile_name.clone(),
            attempts,
            reason: last_err,
        })
    }

    fn name(&self) -> &str {
        &self.profile_name
    }
}

/// Profiles file layout: `[profiles.<name>]` tables plus optional defaults.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct ProfilesConfig {
    #[serde(default)]
    pub profiles: HashMap<String, BackendProfileConfig>,
    #[serde(default)]
    pub defaults: ConfigDefaults,
}

/// Profile as written in the config file; the key supplies the name.
#[derive(Debug, Clone, Deserialize)]
pub struct BackendProfileConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_id: Option<String>,
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub responses: HashMap<String, String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct ConfigDefaults {
    pub backend: Option<String>,
    pub seed: Option<u64>,
    pub log_level: Option<String>,
    pub template_dir: Option<String>,
}

/// Named backends resolved from a profiles file plus the built-in mocks.
pub struct BackendRegistry {
    backends: HashMap<String, Box<dyn TextBackend>>,
    pub defaults: ConfigDefaults,
}

impl BackendRegistry {
    /// Registry with only the built-in mock profiles.
    pub fn builtin() -> Self {
        let mut backends: HashMap<String, Box<dyn TextBackend>> = HashMap::new();
        backends.insert("mock-echo".into(), Box::new(EchoBackend));
        backends.insert("mock-scripted".into(), Box::new(ScriptedBackend::tagging()));
        backends.insert("mock-judge".into(), Box::new(MockJudgeBackend));
        backends.insert("mock-teacher".into(), Box::new(MockTeacherBackend));
        Self {
            backends,
            defaults: ConfigDefaults::default(),
        }
    }

    /// Parse a TOML profiles file and build every profile in it. Built-in
    /// mocks stay available unless shadowed.
    pub fn from_toml(path: &std::path::Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::ProfilesFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let config: ProfilesConfig = toml::from_str(&text).map_err(|e| BackendError::ProfilesFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut registry = Self::builtin();
        registry.defaults = config.defaults;
        for (name, p) in config.profiles {
            let profile = BackendProfile {
                name: name.clone(),
                kind: p.kind,
                endpoint: p.endpoint,
                model_id: p.model_id,
                auth_env: p.auth_env,
                retries: p.retries,
                timeout_secs: p.timeout_secs,
                max_in_flight: p.max_in_flight,
                responses: p.responses,
            };
            registry.backends.insert(name, profile.build()?);
        }
        Ok(registry)
    }

    pub fn insert(&mut self, name: &str, backend: Box<dyn TextBackend>) {
        self.backends.insert(name.to_string(), backend);
    }

    pub fn get(&self, name: &str) -> Result<&dyn TextBackend, BackendError> {
        self.backends
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| BackendError::UnknownProfile(name.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::AgentLabel;

    #[test]
    fn bucket_is_smallest_sufficient() {
        assert_eq!(choose_input_bucket(900).unwrap(), 1024);
        assert_eq!(choose_input_bucket(0).unwrap(), 1024);
        assert_eq!(choose_input_bucket(1024).unwrap(), 1024);
        assert_eq!(choose_input_bucket(1025).unwrap(), 2048);
        assert_eq!(choose_input_bucket(8192).unwrap(), 8192);
        assert!(matches!(
            choose_input_bucket(9000),
            Err(BackendError::InputTooLong { tokens: 9000 })
        ));
    }

    #[test]
    fn bucket_choice_scanned_against_boundaries() {
        // Exhaustive scan: result is the smallest bucket >= n, and monotone.
        let mut prev = 0;
        for n in 0..=8192usize {
            let b = choose_input_bucket(n).unwrap();
            assert!(b >= n);
            for smaller in INPUT_BUCKETS.iter().copied().filter(|s| *s < b) {
                assert!(smaller < n);
            }
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn echo_returns_prompt() {
        let req = GenerationRequest::new("p").unwrap();
        let resp = EchoBackend.generate(&req).unwrap();
        assert_eq!(resp.text, "p");
    }

    #[test]
    fn echo_truncates_to_output_budget() {
        let req = GenerationRequest::new("one two  three four")
            .unwrap()
            .with_max_output_tokens(2);
        assert_eq!(EchoBackend.generate(&req).unwrap().text, "one two");
    }

    #[test]
    fn empty_prompt_is_rejected() {
        assert!(matches!(
            GenerationRequest::new("  "),
            Err(BackendError::EmptyPrompt)
        ));
    }

    #[test]
    fn scripted_backend_keys_on_exercised_agent() {
        let backend = ScriptedBackend::new(HashMap::from([(
            AgentLabel::Conflict,
            "c1".to_string(),
        )]));
        let s = crate::scratchpad::Scratchpad::init("task").unwrap();
        let prompt =
            crate::agents::render_agent_prompt(AgentLabel::Conflict, &s, &Default::default())
                .unwrap();
        let req = GenerationRequest::new(&prompt).unwrap();
        assert_eq!(backend.generate(&req).unwrap().text, "c1");
    }

    #[test]
    fn scripted_backend_skips_labels_without_responses() {
        // A plan-variant finalizer prompt has all four plans present; the
        // first absent label with a response must be FINALIZER, not EXPOSITION.
        let backend = ScriptedBackend::new(HashMap::from([
            (AgentLabel::Conflict, "c".to_string()),
            (AgentLabel::Finalizer, "story".to_string()),
        ]));
        let mut s = crate::scratchpad::Scratchpad::init("task").unwrap();
        for label in crate::label::PLANNING_LABELS {
            s = s.append_text(label, "plan").unwrap();
        }
        let prompt =
            crate::agents::render_agent_prompt(AgentLabel::Finalizer, &s, &Default::default())
                .unwrap();
        let req = GenerationRequest::new(&prompt).unwrap();
        assert_eq!(backend.generate(&req).unwrap().text, "story");
    }

    #[test]
    fn scripted_backend_misses_when_unconfigured() {
        let backend = ScriptedBackend::new(HashMap::new());
        let req = GenerationRequest::new("no headers here").unwrap();
        assert!(matches!(
            backend.generate(&req),
            Err(BackendError::ScriptMiss)
        ));
    }

    #[test]
    fn mocks_are_pure() {
        let req = GenerationRequest::new("same input").unwrap();
        assert_eq!(
            EchoBackend.generate(&req).unwrap(),
            EchoBackend.generate(&req).unwrap()
        );
        let scripted = ScriptedBackend::tagging();
        let s = crate::scratchpad::Scratchpad::init("task").unwrap();
        let prompt =
            crate::agents::render_agent_prompt(AgentLabel::Conflict, &s, &Default::default())
                .unwrap();
        let req = GenerationRequest::new(&prompt).unwrap();
        assert_eq!(
            scripted.generate(&req).unwrap(),
            scripted.generate(&req).unwrap()
        );
    }

    #[test]
    fn generate_does_not_mutate_request() {
        let req = GenerationRequest::new("untouched words").unwrap();
        let before = req.clone();
        let _ = EchoBackend.generate(&req).unwrap();
        assert_eq!(req, before);
    }

    #[test]
    fn http_profile_requires_endpoint_and_auth() {
        let mut p = BackendProfile::bare("h", BackendKind::Http);
        assert!(matches!(p.build(), Err(BackendError::InvalidProfile(..))));
        p.endpoint = Some("http://localhost:1".into());
        assert!(matches!(p.build(), Err(BackendError::InvalidProfile(..))));
        p.auth_env = Some("STORYCREW_TEST_NO_SUCH_VAR".into());
        assert!(p.build().is_ok());
    }

    #[test]
    fn http_auth_missing_is_detected_before_any_network_call() {
        let mut p = BackendProfile::bare("h", BackendKind::Http);
        p.endpoint = Some("http://localhost:1".into());
        p.auth_env = Some("STORYCREW_TEST_UNSET_AUTH_VAR".into());
        std::env::remove_var("STORYCREW_TEST_UNSET_AUTH_VAR");
        let backend = p.build().unwrap();
        let req = GenerationRequest::new("p").unwrap();
        match backend.generate(&req) {
            Err(BackendError::AuthMissing(var)) => {
                assert_eq!(var, "STORYCREW_TEST_UNSET_AUTH_VAR")
            }
            other => panic!("expected AuthMissing, got {other:?}"),
        }
    }

    #[test]
    fn mock_judge_prefers_longer_story() {
        let templates = crate::agents::TemplateSet::default();
        let prompt = templates
            .get("judge")
            .replace("<story a>", "one two three four five")
            .replace("<story b>", "one two");
        let req = GenerationRequest::new(&prompt).unwrap();
        let out = MockJudgeBackend.generate(&req).unwrap().text;
        assert!(out.contains("Plot: A"));
        assert!(out.contains("Overall: A"));
    }

    #[test]
    fn mock_teacher_answers_planning_and_split_prompts() {
        use crate::dataset::{DatasetRecord, Split};
        let story = "First sentence here. Second one follows. Third arrives. \
                     Fourth as well. Fifth closes. Sixth lingers. Seventh ends.";
        let gold = DatasetRecord {
            id: "g".into(),
            prompt: "Write something.".into(),
            story: story.into(),
            split: Split::Train,
        };
        let templates = crate::agents::TemplateSet::default();
        let teacher = MockTeacherBackend;
        for label in crate::label::PLANNING_LABELS {
            let prompt =
                crate::synthdata::build_planning_target_prompt(label, &gold, &templates).unwrap();
            let req = GenerationRequest::new(&prompt).unwrap();
            assert!(!teacher.generate(&req).unwrap().text.is_empty(), "{label}");
        }
        let split_prompt = crate::synthdata::build_story_split_prompt(&gold, &templates).unwrap();
        let req = GenerationRequest::new(&split_prompt).unwrap();
        let response = teacher.generate(&req).unwrap().text;
        let split = crate::synthdata::parse_split_response(&response, story).unwrap();
        let rebuilt: String = split
            .spans
            .iter()
            .map(|(_, s, e)| &story[*s..*e])
            .collect();
        assert_eq!(rebuilt, story);
    }

    #[test]
    fn mock_teacher_full_pipeline_yields_nine_examples() {
        use crate::dataset::{DatasetRecord, Split};
        let gold = DatasetRecord {
            id: "g".into(),
            prompt: "Write about a harbor.".into(),
            story: "One sails. Two waits. Three sinks. Four mourns. Five rebuilds. Six sails again."
                .into(),
            split: Split::Train,
        };
        let examples = crate::synthdata::synthesize_example(
            &gold,
            &MockTeacherBackend,
            &Default::default(),
            4096,
        )
        .unwrap();
        assert_eq!(examples.len(), 9);
    }

    #[test]
    fn registry_resolves_builtin_and_toml_profiles() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profiles.toml");
        std::fs::write(
            &path,
            r#"
[defaults]
backend = "tagger"

[profiles.tagger]
kind = "mock-scripted"

[profiles.tagger.responses]
CONFLICT = "a conflict"
"#,
        )
        .unwrap();
        let registry = BackendRegistry::from_toml(&path).unwrap();
        assert!(registry.get("mock-echo").is_ok());
        assert!(registry.get("tagger").is_ok());
        assert_eq!(registry.defaults.backend.as_deref(), Some("tagger"));
        assert!(matches!(
            registry.get("absent"),
            Err(BackendError::UnknownProfile(_))
        ));
    }
}
