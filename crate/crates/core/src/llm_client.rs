//! Chat-completion backends: an OpenAI-compatible HTTP client plus offline
//! backends (oracle, transcript replay, fixed scripts) for tests and
//! reproducible runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::chat::{ChatMessage, ChatMessages};
use crate::env_model::Environment;
use crate::goals::GoalSpec;
use crate::util::sha256_hex;

/// Ground truth an oracle backend may consult. Never sent over the wire.
#[derive(Debug, Clone)]
pub struct OracleHint {
    pub full: Arc<Environment>,
    pub goal: GoalSpec,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RequestContext {
    pub episode_id: String,
    pub hint: Option<OracleHint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency: Duration,
    pub attempts: u32,
}

impl Completion {
    pub fn instant(text: impl Into<String>) -> Self {
        Self { text: text.into(), latency: Duration::ZERO, attempts: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("invalid message list: {0}")]
    InvalidMessages(String),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("server returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion payload: {0}")]
    BadPayload(String),
    #[error("transcript mismatch: {0}")]
    TranscriptMismatch(String),
    #[error("backend {0} needs an oracle hint")]
    MissingHint(&'static str),
    #[error("backend configuration: {0}")]
    Config(String),
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, messages: &ChatMessages, ctx: &RequestContext) -> Result<Completion, LlmError>;

    fn describe(&self) -> String;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn complete(&self, messages: &ChatMessages, ctx: &RequestContext) -> Result<Completion, LlmError> {
        (**self).complete(messages, ctx)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, messages: &ChatMessages, ctx: &RequestContext) -> Result<Completion, LlmError> {
        (**self).complete(messages, ctx)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, messages: &ChatMessages, ctx: &RequestContext) -> Result<Completion, LlmError> {
        (**self).complete(messages, ctx)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self { permits: Mutex::new(permits.max(1)), cv: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().expect("semaphore lock");
        while *n == 0 {
            n = self.cv.wait(n).expect("semaphore lock");
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore lock") += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    /// Up to and including the API version, e.g. `http://host:8000/v1`.
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub top_p: Option<f64>,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    /// Retries after the first attempt, for transport errors and 5xx.
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_factor: f64,
    /// Name of the environment variable holding a bearer token.
    pub api_key_env: Option<String>,
    pub parallelism: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".to_string(),
            model: "planner".to_string(),
            temperature: 0.0,
            top_p: None,
            max_tokens: 1024,
            timeout_secs: 120.0,
            max_retries: 3,
            backoff_base_ms: 1000,
            backoff_factor: 2.0,
            api_key_env: None,
            parallelism: 4,
        }
    }
}

/// Body of `POST {base_url}/chat/completions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
}

/// The fields of a completion response this client reads.
pub fn completion_text(body: &Value) -> Result<String, LlmError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::BadPayload("missing choices[0].message.content".into()))
}

/// Minimal completion response in the same shape servers return.
pub fn completion_body(model: &str, text: &str) -> Value {
    serde_json::json!({
        "object": "chat.completion",
        "model": model,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": text},
            "finish_reason": "stop"
        }]
    })
}

pub struct HttpBackend {
    cfg: HttpConfig,
    agent: ureq::Agent,
    gate: Semaphore,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Result<Self, LlmError> {
        if cfg.timeout_secs.is_nan() || cfg.timeout_secs <= 0.0 {
            return Err(LlmError::Config("timeout_secs must be positive".into()));
        }
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| LlmError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { gate: Semaphore::new(cfg.parallelism), cfg, agent, api_key })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.cfg
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &ChatRequest) -> Result<String, (bool, LlmError)> {
        let mut req = self.agent.post(&self.endpoint());
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp =
            req.send_json(body).map_err(|e| (true, LlmError::Transport { attempts: 1, message: e.to_string() }))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| (true, LlmError::Transport { attempts: 1, message: e.to_string() }))?;
        if status >= 500 {
            return Err((true, LlmError::Status { status, body: text }));
        }
        if status != 200 {
            return Err((false, LlmError::Status { status, body: text }));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| (false, LlmError::BadPayload(e.to_string())))?;
        completion_text(&v).map_err(|e| (false, e))
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, messages: &ChatMessages, _ctx: &RequestContext) -> Result<Completion, LlmError> {
        messages.validate().map_err(LlmError::InvalidMessages)?;
        let body = ChatRequest {
            model: self.cfg.model.clone(),
            messages: messages.0.clone(),
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_tokens,
            top_p: self.cfg.top_p,
        };
        let _permit = self.gate.acquire();
        let start = Instant::now();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok(text) => return Ok(Completion { text, latency: start.elapsed(), attempts }),
                Err((retry, err)) => {
                    if !retry || attempts > self.cfg.max_retries {
                        return Err(match err {
                            LlmError::Transport { message, .. } => LlmError::Transport { attempts, message },
                            other => other,
                        });
                    }
                    let wait = self.cfg.backoff_base_ms as f64 * self.cfg.backoff_factor.powi(attempts as i32 - 1);
                    thread::sleep(Duration::from_millis(wait as u64));
                }
            }
        }
    }

    fn describe(&self) -> String {
        format!("http({}, model={})", self.cfg.base_url, self.cfg.model)
    }
}

/// Replay key: the system prompt and first user turn identify an episode.
pub fn prompt_key(messages: &ChatMessages) -> String {
    let mut s = String::new();
    let _ = write!(s, "{}\u{0}{}", messages.system_text(), messages.first_user_text());
    sha256_hex(s.as_bytes())
}

pub fn prompt_hash(messages: &ChatMessages) -> String {
    sha256_hex(serde_json::to_string(messages).expect("messages serialize").as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Request,
    Response,
}

/// One line of a transcript file. Timestamps are milliseconds of model
/// latency accumulated within the episode, so identical runs produce
/// identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub timestamp: f64,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq)]
struct Exchange {
    key: String,
    hash: String,
    messages: ChatMessages,
    text: String,
    latency: Duration,
}

/// Wraps a backend and keeps every exchange for later replay.
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<BTreeMap<String, Vec<Exchange>>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, log: Mutex::new(BTreeMap::new()) }
    }

    /// All exchanges, grouped by episode id in sorted order.
    pub fn entries(&self) -> Vec<TranscriptEntry> {
        let log = self.log.lock().expect("transcript lock");
        let mut out = Vec::new();
        for (episode, exchanges) in log.iter() {
            out.extend(episode_entries(episode, exchanges));
        }
        out
    }

    pub fn episode_entries(&self, episode_id: &str) -> Vec<TranscriptEntry> {
        let log = self.log.lock().expect("transcript lock");
        log.get(episode_id).map(|x| episode_entries(episode_id, x)).unwrap_or_default()
    }

    pub fn to_jsonl(&self) -> String {
        entries_to_jsonl(&self.entries())
    }
}

fn episode_entries(episode: &str, exchanges: &[Exchange]) -> Vec<TranscriptEntry> {
    let mut out = Vec::new();
    let mut clock = 0.0;
    for (index, x) in exchanges.iter().enumerate() {
        out.push(TranscriptEntry {
            direction: Direction::Request,
            timestamp: clock,
            payload: serde_json::json!({
                "episode_id": episode,
                "index": index,
                "key": x.key,
                "prompt_hash": x.hash,
                "messages": x.messages,
            }),
        });
        let ms = x.latency.as_secs_f64() * 1000.0;
        clock += ms;
        out.push(TranscriptEntry {
            direction: Direction::Response,
            timestamp: clock,
            payload: serde_json::json!({
                "episode_id": episode,
                "index": index,
                "key": x.key,
                "text": x.text,
                "latency_ms": ms,
            }),
        });
    }
    out
}

pub fn entries_to_jsonl(entries: &[TranscriptEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        s.push_str(&serde_json::to_string(e).expect("entry serializes"));
        s.push('\n');
    }
    s
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, messages: &ChatMessages, ctx: &RequestContext) -> Result<Completion, LlmError> {
        let c = self.inner.complete(messages, ctx)?;
        self.log.lock().expect("transcript lock").entry(ctx.episode_id.clone()).or_default().push(Exchange {
            key: prompt_key(messages),
            hash: prompt_hash(messages),
            messages: messages.clone(),
            text: c.text.clone(),
            latency: c.latency,
        });
        Ok(c)
    }

    fn describe(&self) -> String {
        format!("recording({})", self.inner.describe())
    }
}

#[derive(Debug, Clone)]
struct Recorded {
    hash: String,
    text: String,
    latency: Duration,
}

/// Serves responses from a transcript. The n-th assistant turn of an
/// episode gets the n-th recorded response for the same opening prompt.
/// Strict mode also requires the full prompt to match byte for byte.
pub struct ReplayBackend {
    by_key: BTreeMap<String, Vec<Recorded>>,
    strict: bool,
}

impl ReplayBackend {
    pub fn from_jsonl(text: &str, strict: bool) -> Result<Self, LlmError> {
        let mut requests: BTreeMap<(String, u64), (String, String)> = BTreeMap::new();
        let mut episodes: Vec<(String, String, Vec<Recorded>)> = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let e: TranscriptEntry = serde_json::from_str(line)
                .map_err(|err| LlmError::TranscriptMismatch(format!("line {}: {err}", i + 1)))?;
            let p = &e.payload;
            let episode = p["episode_id"].as_str().unwrap_or_default().to_string();
            let index = p["index"].as_u64().unwrap_or_default();
            let key = p["key"].as_str().unwrap_or_default().to_string();
            match e.direction {
                Direction::Request => {
                    let hash = p["prompt_hash"].as_str().unwrap_or_default().to_string();
                    requests.insert((episode, index), (key, hash));
                }
                Direction::Response => {
                    let hash = requests.get(&(episode.clone(), index)).map(|(_, h)| h.clone()).unwrap_or_default();
                    let rec = Recorded {
                        hash,
                        text: p["text"].as_str().unwrap_or_default().to_string(),
                        latency: Duration::from_secs_f64(p["latency_ms"].as_f64().unwrap_or(0.0).max(0.0) / 1000.0),
                    };
                    match episodes.iter_mut().find(|(ep, k, _)| *ep == episode && *k == key) {
                        Some((_, _, v)) => v.push(rec),
                        None => episodes.push((episode, key, vec![rec])),
                    }
                }
            }
        }
        let mut by_key: BTreeMap<String, Vec<Recorded>> = BTreeMap::new();
        for (_, key, recs) in episodes {
            by_key.entry(key).or_insert(recs);
        }
        Ok(Self { by_key, strict })
    }

    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, messages: &ChatMessages, ctx: &RequestContext) -> Result<Completion, LlmError> {
        messages.validate().map_err(LlmError::InvalidMessages)?;
        let key = prompt_key(messages);
        let turn = messages.assistant_turns();
        let rec = self
            .by_key
            .get(&key)
            .ok_or_else(|| LlmError::TranscriptMismatch(format!("no recorded episode for {}", ctx.episode_id)))?
            .get(turn)
            .ok_or_else(|| {
                LlmError::TranscriptMismatch(format!("episode {} has no recorded turn {turn}", ctx.episode_id))
            })?;
        if self.strict && rec.hash != prompt_hash(messages) {
            return Err(LlmError::TranscriptMismatch(format!(
                "prompt for turn {turn} of {} differs from the recording",
                ctx.episode_id
            )));
        }
        Ok(Completion { text: rec.text.clone(), latency: rec.latency, attempts: 1 })
    }

    fn describe(&self) -> String {
        format!("replay({} episodes{})", self.by_key.len(), if self.strict { ", strict" } else { "" })
    }
}

/// Returns the same text every turn.
pub struct RepeatBackend(pub String);

impl ChatBackend for RepeatBackend {
    fn complete(&self, messages: &ChatMessages, _ctx: &RequestContext) -> Result<Completion, LlmError> {
        messages.validate().map_err(LlmError::InvalidMessages)?;
        Ok(Completion::instant(self.0.clone()))
    }

    fn describe(&self) -> String {
        "repeat".to_string()
    }
}

/// Answers every turn with an empty string.
pub struct NullBackend;

impl ChatBackend for NullBackend {
    fn complete(&self, messages: &ChatMessages, _ctx: &RequestContext) -> Result<Completion, LlmError> {
        messages.validate().map_err(LlmError::InvalidMessages)?;
        Ok(Completion::instant(String::new()))
    }

    fn describe(&self) -> String {
        "null".to_string()
    }
}

/// Plays back a fixed list of responses by turn index.
pub struct ScriptedBackend(pub Vec<String>);

impl ChatBackend for ScriptedBackend {
    fn complete(&self, messages: &ChatMessages, ctx: &RequestContext) -> Result<Completion, LlmError> {
        messages.validate().map_err(LlmError::InvalidMessages)?;
        let turn = messages.assistant_turns();
        self.0.get(turn).map(|t| Completion::instant(t.clone())).ok_or_else(|| {
            LlmError::TranscriptMismatch(format!("script for {} ends before turn {turn}", ctx.episode_id))
        })
    }

    fn describe(&self) -> String {
        format!("scripted({} turns)", self.0.len())
    }
}

/// Backend from a closure, for tests and custom policies.
pub struct FnBackend<F>(pub F);

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatMessages, &RequestContext) -> String + Send + Sync,
{
    fn complete(&self, messages: &ChatMessages, ctx: &RequestContext) -> Result<Completion, LlmError> {
        messages.validate().map_err(LlmError::InvalidMessages)?;
        Ok(Completion::instant((self.0)(messages, ctx)))
    }

    fn describe(&self) -> String {
        "fn".to_string()
    }
}
