//! Model access: the completion contract, an HTTP chat-endpoint client with
//! retry/backoff, a deterministic scripted backend for desk-scale testing,
//! and the LLM-as-a-judge scorer.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{GroundTruth, Message};

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication error: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: usize },
    #[error("server error {status} after {attempts} attempts")]
    ServerError { status: u16, attempts: usize },
    #[error("malformed response body: {0}")]
    MalformedResponse(String),
    #[error("no scripted response for key {0:?}")]
    NoScript(String),
    #[error("scripted responses exhausted for key {0:?}")]
    ScriptExhausted(String),
    #[error("scripted failure: {0}")]
    ScriptedFailure(String),
    #[error("credential env var {0} is not set")]
    MissingCredential(String),
}

/// Decoding options for one completion request.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CompletionOptions {
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Set by the runner so scripted backends can match responses to the
    /// question being asked. HTTP backends ignore it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_key: Option<String>,
}

impl CompletionOptions {
    pub fn keyed(key: impl Into<String>) -> Self {
        CompletionOptions { script_key: Some(key.into()), ..Default::default() }
    }
}

/// A completion provider. Implementations must tolerate concurrent calls.
pub trait ModelBackend: Send + Sync {
    fn complete(&self, messages: &[Message], options: &CompletionOptions)
        -> Result<String, BackendError>;
    fn identity(&self) -> &str;
}

// --- scripted backend ------------------------------------------------------

/// One recorded request, for assertions in tests.
#[derive(Debug, Clone)]
pub struct RecordedCall {
    pub key: String,
    pub messages: Vec<Message>,
}

/// Deterministic stand-in model that replays canned completions.
///
/// Responses are matched by key, tried in order: the caller-provided
/// `script_key`, a `fp:<first 16 hex of sha256(messages)>` content
/// fingerprint, the exact content of the last message, then the `*`
/// wildcard entry. Each key holds an ordered response list consumed one call
/// at a time; exhausting a list is an error unless looping is enabled. A
/// response starting with `!error ` simulates a backend failure (for
/// example a timeout) instead of returning text.
pub struct ScriptedBackend {
    name: String,
    script: HashMap<String, Vec<String>>,
    cursors: Mutex<HashMap<String, usize>>,
    loop_responses: bool,
    latency: Duration,
    calls: Mutex<Vec<RecordedCall>>,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>) -> Self {
        ScriptedBackend {
            name: name.into(),
            script: HashMap::new(),
            cursors: Mutex::new(HashMap::new()),
            loop_responses: false,
            latency: Duration::ZERO,
            calls: Mutex::new(Vec::new()),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
        }
    }

    pub fn with_responses(
        mut self,
        key: impl Into<String>,
        responses: Vec<String>,
    ) -> Self {
        self.script.insert(key.into(), responses);
        self
    }

    pub fn with_response(self, key: impl Into<String>, response: impl Into<String>) -> Self {
        self.with_responses(key, vec![response.into()])
    }

    /// Reuse each response list from the start once exhausted.
    pub fn looping(mut self) -> Self {
        self.loop_responses = true;
        self
    }

    /// Artificial per-call delay, to make concurrency observable in tests.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn from_script(name: impl Into<String>, script: HashMap<String, Vec<String>>) -> Self {
        ScriptedBackend { script, ..ScriptedBackend::new(name) }
    }

    pub fn recorded_calls(&self) -> Vec<RecordedCall> {
        self.calls.lock().unwrap().clone()
    }

    /// Highest number of completions that were in flight at the same time.
    pub fn peak_concurrency(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn fingerprint(messages: &[Message]) -> String {
        let mut hasher = Sha256::new();
        for m in messages {
            hasher.update(m.role.as_bytes());
            hasher.update([0]);
            hasher.update(m.content.as_bytes());
            hasher.update([0]);
        }
        let digest = hasher.finalize();
        let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        format!("fp:{hex}")
    }

    fn resolve_key(&self, messages: &[Message], options: &CompletionOptions) -> Option<String> {
        if let Some(key) = &options.script_key {
            if self.script.contains_key(key) {
                return Some(key.clone());
            }
        }
        let fp = Self::fingerprint(messages);
        if self.script.contains_key(&fp) {
            return Some(fp);
        }
        if let Some(last) = messages.last() {
            if self.script.contains_key(&last.content) {
                return Some(last.content.clone());
            }
        }
        if self.script.contains_key("*") {
            return Some("*".to_string());
        }
        None
    }
}

impl ModelBackend for ScriptedBackend {
    fn complete(
        &self,
        messages: &[Message],
        options: &CompletionOptions,
    ) -> Result<String, BackendError> {
        let current = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(current, Ordering::SeqCst);
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let result = (|| {
            let key = self
                .resolve_key(messages, options)
                .ok_or_else(||

                    BackendError::NoScript(
                        options
                            .script_key
                            .clone()
                            .unwrap_or_else(|| Self::fingerprint(messages)),
                    ))?;
            self.calls
                .lock()
                .unwrap()
                .push(RecordedCall { key: key.clone(), messages: messages.to_vec() });
            let responses = &self.script[&key];
            let mut cursors = self.cursors.lock().unwrap();
            let cursor = cursors.entry(key.clone()).or_insert(0);
            let index = if self.loop_responses {
                *cursor % responses.len()
            } else if *cursor >= responses.len() {
                return Err(BackendError::ScriptExhausted(key));
            } else {
                *cursor
            };
            *cursor += 1;
            let response = &responses[index];
            match response.strip_prefix("!error ") {
                Some(reason) => Err(BackendError::ScriptedFailure(reason.to_string())),
                None => Ok(response.clone()),
            }
        })();
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }

    fn identity(&self) -> &str {
        &self.name
    }
}

// --- HTTP backend ----------------------------------------------------------

fn default_path() -> String {
    "/v1/chat/completions".to_string()
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> usize {
    3
}

fn default_backoff() -> u64 {
    250
}

/// Chat-completion endpoint configuration. Credentials are read from the
/// environment variable named in `api_key_env`, never from the config
/// itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpEndpointConfig {
    pub base_url: String,
    #[serde(default = "default_path")]
    pub path: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Extra headers; `{api_key}` in a value is replaced with the credential.
    #[serde(default)]
    pub headers: Vec<(String, String)>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    #[serde(default = "default_backoff")]
    pub initial_backoff_ms: u64,
}

/// Blocking chat-completion client with exponential backoff on transient
/// failures (429 and 5xx). Total attempts never exceed `max_retries + 1`.
pub struct HttpBackend {
    config: HttpEndpointConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    retries_used: AtomicUsize,
}

impl HttpBackend {
    pub fn new(config: HttpEndpointConfig) -> Result<Self, BackendError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| BackendError::MissingCredential(var.clone()))?,
            ),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(HttpBackend { config, client, api_key, retries_used: AtomicUsize::new(0) })
    }

    /// Total retries performed across all calls.
    pub fn retries_used(&self) -> usize {
        self.retries_used.load(Ordering::SeqCst)
    }

    fn url(&self) -> String {
        format!("{}{}", self.config.base_url.trim_end_matches('/'), self.config.path)
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: String,
}

impl ModelBackend for HttpBackend {
    fn complete(
        &self,
        messages: &[Message],
        options: &CompletionOptions,
    ) -> Result<String, BackendError> {
        let body = WireRequest {
            model: &self.config.model,
            messages,
            temperature: options.temperature,
            max_tokens: options.max_tokens,
            seed: options.seed,
        };
        let mut backoff = Duration::from_millis(self.config.initial_backoff_ms);
        let mut attempts = 0;
        loop {
            attempts += 1;
            let mut request = self.client.post(self.url()).json(&body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            for (name, value) in &self.config.headers {
                let value = match &self.api_key {
                    Some(key) => value.replace("{api_key}", key),
                    None => value.clone(),
                };
                request = request.header(name, value);
            }
            let transient = match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        let parsed: WireResponse = response
                            .json()
                            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
                        let choice = parsed.choices.into_iter().next().ok_or_else(|| {
                            BackendError::MalformedResponse("empty choices list".into())
                        })?;
                        return Ok(choice.message.content);
                    }
                    match status.as_u16() {
                        401 | 403 => return Err(BackendError::Auth(status.to_string())),
                        429 => Err(BackendError::RateLimited { attempts }),
                        code if code >= 500 => {
                            Err(BackendError::ServerError { status: code, attempts })
                        }
                        code => {
                            return Err(BackendError::Transport(format!(
                                "unexpected status {code}"
                            )))
                        }
                    }
                }
                Err(e) => Err(BackendError::Transport(e.to_string())),
            };
            match transient {
                Ok(text) => return Ok(text),
                Err(err) => {
                    if attempts > self.config.max_retries {
                        return Err(err);
                    }
                    self.retries_used.fetch_add(1, Ordering::SeqCst);
                    std::thread::sleep(backoff);
                    backoff = backoff.saturating_mul(2);
                }
            }
        }
    }

    fn identity(&self) -> &str {
        &self.config.model
    }
}

// --- judge -----------------------------------------------------------------

const JUDGE_PROMPT: &str = include_str!("../assets/judge_prompt.txt");

/// Binary verdict from the judge on one predicted plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeOutcome {
    pub score: u8,
    /// Set when the verdict could not be parsed from the judge's reply.
    pub diagnostic: Option<String>,
}

/// Ask a judge model whether a predicted plan corresponds to the ground
/// truth. Backend errors propagate so the caller can record the question as
/// unjudged rather than scoring it 0.
pub fn judge_score(
    judge_backend: &dyn ModelBackend,
    predicted_plan_text: &str,
    gt: &GroundTruth,
    options: &CompletionOptions,
) -> Result<JudgeOutcome, BackendError> {
    let reference = serde_json::json!({
        "API": gt.api_sequence,
        "parameters": gt.args_sequence,
    });
    let prompt = JUDGE_PROMPT
        .replace("{reference}", &reference.to_string())
        .replace("{predicted}", predicted_plan_text);
    let reply = judge_backend.complete(&[Message::user(prompt)], options)?;
    match parse_verdict(&reply) {
        Some(score) => Ok(JudgeOutcome { score, diagnostic: None }),
        None => Ok(JudgeOutcome {
            score: 0,
            diagnostic: Some(format!("no yes/no verdict token in judge reply: {reply:?}")),
        }),
    }
}

// First yes/no word wins, case-insensitive, punctuation ignored.
fn parse_verdict(reply: &str) -> Option<u8> {
    for token in reply.split_whitespace() {
        let word: String = token
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match word.as_str() {
            "yes" => return Some(1),
            "no" => return Some(0),
            _ => {}
        }
    }
    None
}
