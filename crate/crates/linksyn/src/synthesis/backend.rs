//! Completion backends: the `Backend` trait, a deterministic offline mock,
//! and (behind the `http` feature) an OpenAI-compatible chat client.
//!
//! A backend is a single `complete(prompt) -> text` function; which model
//! sits behind it is configuration, not code. The mock derives every byte of
//! its output from a digest of the prompt, so pipelines built on it are
//! fully reproducible, and it exposes call/in-flight counters so tests can
//! observe the concurrency cap.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("rate limited")]
    RateLimited,
    #[error("transient backend error: {0}")]
    Transient(String),
}

impl BackendError {
    /// Rate limits and transient (5xx-style) failures are worth retrying;
    /// hard unavailability is not.
    pub fn retryable(&self) -> bool {
        matches!(self, BackendError::RateLimited | BackendError::Transient(_))
    }
}

/// Retry schedule for retryable backend errors: exponential backoff starting
/// at `base_delay_ms`, capped at `max_delay_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_delay_ms: 250, max_delay_ms: 4_000 }
    }
}

impl RetryPolicy {
    pub fn delay_ms(&self, attempt: u32) -> u64 {
        self.base_delay_ms
            .saturating_mul(1u64 << attempt.min(16))
            .min(self.max_delay_ms)
    }
}

/// Backend connection and request settings. Sampling parameters default to
/// temperature 0.6 / top-p 0.95. The API credential is read from the
/// environment variable named here — never from a flag or config value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    /// Full chat-completions URL (e.g. `https://host/v1/chat/completions`).
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    /// Concurrency cap for the request pool.
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    /// Name of the environment variable holding the API key. An unset
    /// variable sends unauthenticated requests (local endpoints).
    pub api_key_env: String,
    /// Per-request timeout in seconds.
    pub timeout_secs: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: String::new(),
            temperature: 0.6,
            top_p: 0.95,
            max_in_flight: 8,
            retry: RetryPolicy::default(),
            api_key_env: "LINKSYN_API_KEY".to_string(),
            timeout_secs: 120,
        }
    }
}

/// A completion provider. Implementations must be callable from multiple
/// request-pool threads at once.
pub trait Backend: Sync {
    /// Stable identifier recorded in provenance (e.g. `mock`, `http:model`).
    fn id(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;
}

/// Failure-injection plan for [`MockBackend`].
#[derive(Debug, Clone, Default)]
pub struct MockPlan {
    /// Return truncated JSON for the first N completions.
    pub truncate_first: usize,
    /// Truncate every completion (forces quarantine).
    pub truncate_all: bool,
    /// Return `RateLimited` for the first N completions.
    pub rate_limit_first: usize,
    /// Fail every completion as unavailable.
    pub unavailable: bool,
    /// Regenerator calls report that no listed option is correct.
    pub flag_missing_option: bool,
}

/// Deterministic offline backend. Synthesizer prompts yield a fenced JSON
/// array of `gen_num` schema-valid items; regenerator prompts yield a
/// refinement object echoing the input answer. All content is derived from
/// a SHA-256 digest of the prompt.
pub struct MockBackend {
    plan: MockPlan,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl MockBackend {
    pub fn new() -> Self {
        Self::with_plan(MockPlan::default())
    }

    pub fn with_plan(plan: MockPlan) -> Self {
        Self {
            plan,
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
        }
    }

    /// Total completions attempted (including injected failures).
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Highest number of simultaneously in-flight completions observed.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    fn synthesizer_payload(&self, prompt: &str, digest: &str) -> String {
        let gen_num = parse_after(prompt, "Generate ").unwrap_or(1);
        let mcq = prompt.contains("The generated question type is multiple-choice");
        let items: Vec<serde_json::Value> = (0..gen_num)
            .map(|i| {
                let question = format!(
                    "Mock synthesized question {i} probing the linked concepts (trace {digest}-{i})?"
                );
                if mcq {
                    serde_json::json!({
                        "question": question,
                        "options": [
                            format!("Mock option A ({digest}-{i})"),
                            format!("Mock option B ({digest}-{i})"),
                            format!("Mock option C ({digest}-{i})"),
                            format!("Mock option D ({digest}-{i})"),
                        ],
                        "answer_index": i % 4,
                    })
                } else {
                    serde_json::json!({
                        "question": question,
                        "solution": format!("Step 1: restate the problem. Step 2: apply the governing identity ({digest}-{i})."),
                        "answer": format!("Mock final answer {i} ({digest})"),
                    })
                }
            })
            .collect();
        let array = serde_json::to_string(&items).expect("mock payload serializes");
        format!("Sure - here are {gen_num} questions.\n```json\n{array}\n```\n")
    }

    fn regenerator_payload(&self, prompt: &str, digest: &str) -> String {
        let input: serde_json::Value = prompt
            .rsplit_once("Input: ")
            .and_then(|(_, tail)| serde_json::from_str(tail.trim()).ok())
            .unwrap_or(serde_json::Value::Null);
        let is_mcq = input.get("options").is_some();
        let steps = format!(
            "Key information extracted; relevant identities applied; options analyzed; common errors flagged ({digest})."
        );
        let body = if is_mcq && self.plan.flag_missing_option {
            serde_json::json!({
                "solution_steps": steps,
                "final_answer": format!("Corrected answer ({digest})"),
                "missing_correct_option": true,
            })
        } else if is_mcq {
            let idx = input.get("answer_index").and_then(|v| v.as_u64()).unwrap_or(0);
            let answer = input
                .get("answer")
                .and_then(|v| v.as_str())
                .map(str::to_string)
                .unwrap_or_else(|| format!("Mock refined answer ({digest})"));
            serde_json::json!({
                "solution_steps": steps,
                "final_answer": answer,
                "answer_index": idx,
                "missing_correct_option": false,
            })
        } else {
            let answer = input
                .get("answer")
                .and_then(|v| v.as_str())
                .map(str::to_string)
                .unwrap_or_else(|| format!("Mock refined answer ({digest})"));
            serde_json::json!({ "solution_steps": steps, "final_answer": answer })
        };
        format!("```json\n{body}\n```\n")
    }
}

fn parse_after(text: &str, marker: &str) -> Option<usize> {
    let tail = &text[text.find(marker)? + marker.len()..];
    let digits: String = tail.chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        // Hold the slot briefly so concurrent callers actually overlap and
        // the peak counter is meaningful.
        std::thread::sleep(std::time::Duration::from_micros(300));
        let result = (|| {
            if self.plan.unavailable {
                return Err(BackendError::Unavailable("mock configured as down".into()));
            }
            if call < self.plan.rate_limit_first {
                return Err(BackendError::RateLimited);
            }
            let digest = hex_digest(prompt);
            let digest = &digest[..12];
            let mut payload = if prompt.contains("Answer Requirements") {
                self.regenerator_payload(prompt, digest)
            } else {
                self.synthesizer_payload(prompt, digest)
            };
            if self.plan.truncate_all || call < self.plan.truncate_first {
                payload.truncate(payload.len() / 2);
            }
            Ok(payload)
        })();
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }
}

/// SHA-256 of a completion payload, hex-encoded; recorded in provenance.
pub fn hex_digest(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let out = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// OpenAI-compatible chat-completions client.
#[cfg(feature = "http")]
pub struct HttpBackend {
    id: String,
    client: reqwest::blocking::Client,
    config: BackendConfig,
    api_key: Option<String>,
}

#[cfg(feature = "http")]
impl HttpBackend {
    /// Builds the client. The credential is read once from the environment
    /// variable named in `config.api_key_env`; when unset, requests carry no
    /// Authorization header.
    pub fn new(config: &BackendConfig) -> Result<Self, BackendError> {
        if config.endpoint.is_empty() {
            return Err(BackendError::Unavailable("no endpoint configured".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let api_key = std::env::var(&config.api_key_env).ok();
        Ok(Self {
            id: format!("http:{}", config.model),
            client,
            config: config.clone(),
            api_key,
        })
    }
}

#[cfg(feature = "http")]
impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "top_p": self.config.top_p,
        });
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Transient(format!("request timeout: {e}"))
            } else {
                BackendError::Unavailable(e.to_string())
            }
        })?;
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(BackendError::RateLimited);
        }
        if status.is_server_error() {
            return Err(BackendError::Transient(format!("server error {status}")));
        }
        if !status.is_success() {
            return Err(BackendError::Unavailable(format!("http status {status}")));
        }
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| BackendError::Transient(format!("unreadable response body: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| BackendError::Transient("malformed completion response".into()))
    }
}
