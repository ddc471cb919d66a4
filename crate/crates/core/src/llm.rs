//! Chat-completions clients: an HTTP endpoint and deterministic mocks.

use std::collections::HashMap;
use std::fmt;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::LlmError;
use crate::seed::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    /// Text of the last user message.
    pub fn prompt(&self) -> &str {
        self.messages.iter().rev().find(|m| m.role == "user").map(|m| m.content.as_str()).unwrap_or("")
    }
}

pub trait ChatModel: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError>;
}

#[derive(Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Environment variable with the bearer token. `None` sends no
    /// Authorization header.
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_inflight: usize,
    pub requests_per_second: f64,
    /// Advertised context window in tokens; longer prompts are not sent.
    pub context_window: Option<u64>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            temperature: 0.7,
            max_tokens: Some(512),
            timeout_secs: 600,
            max_retries: 5,
            backoff_ms: 1000,
            max_inflight: 4,
            requests_per_second: 4.0,
            context_window: None,
        }
    }
}

impl fmt::Debug for EndpointConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EndpointConfig")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("api_key_env", &self.api_key_env)
            .field("temperature", &self.temperature)
            .field("max_tokens", &self.max_tokens)
            .field("max_inflight", &self.max_inflight)
            .finish_non_exhaustive()
    }
}

impl EndpointConfig {
    pub fn request(&self, prompt: impl Into<String>) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            messages: vec![ChatMessage::user(prompt)],
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }
}

/// Token bucket shared by all workers of one endpoint.
pub struct RateLimiter {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    /// `rate` tokens per second, bursts up to `capacity`. A non-positive
    /// rate disables limiting.
    pub fn new(rate: f64, capacity: f64) -> Self {
        let capacity = capacity.max(1.0);
        RateLimiter { rate, capacity, state: Mutex::new((capacity, Instant::now())) }
    }

    pub fn acquire(&self) {
        if self.rate <= 0.0 {
            return;
        }
        loop {
            let wait = {
                let mut s = self.state.lock().expect("rate limiter lock");
                let now = Instant::now();
                let refill = now.duration_since(s.1).as_secs_f64() * self.rate;
                s.0 = (s.0 + refill).min(self.capacity);
                s.1 = now;
                if s.0 >= 1.0 {
                    s.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - s.0) / self.rate)
            };
            std::thread::sleep(wait);
        }
    }
}

pub struct HttpChatModel {
    cfg: EndpointConfig,
    key: Option<String>,
    client: reqwest::blocking::Client,
    limiter: RateLimiter,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

fn is_context_error(status: u16, body: &str) -> bool {
    let b = body.to_ascii_lowercase();
    status == 413
        || b.contains("context_length_exceeded")
        || b.contains("maximum context length")
        || b.contains("context length")
        || b.contains("too many tokens")
}

impl HttpChatModel {
    pub fn new(cfg: EndpointConfig) -> Result<Self, LlmError> {
        let key = match &cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| LlmError::MissingKey(var.clone()))?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport { message: e.to_string(), retryable: false })?;
        let limiter = RateLimiter::new(cfg.requests_per_second, cfg.max_inflight as f64);
        Ok(HttpChatModel { cfg, key, client, limiter })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    fn send_once(&self, req: &ChatRequest) -> Result<String, LlmError> {
        self.limiter.acquire();
        let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let mut builder = self.client.post(url).json(req);
        if let Some(k) = &self.key {
            builder = builder.bearer_auth(k);
        }
        let resp = builder.send().map_err(|e| LlmError::Transport { message: e.to_string(), retryable: true })?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| LlmError::Transport { message: e.to_string(), retryable: true })?;
        if !(200..300).contains(&status) {
            if is_context_error(status, &body) {
                return Err(LlmError::ContextLength);
            }
            let mut body = body;
            body.truncate(500);
            return Err(LlmError::Http { status, body });
        }
        let c: Completion = serde_json::from_str(&body).map_err(|e| LlmError::Decode(e.to_string()))?;
        c.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Decode("response has no message content".into()))
    }
}

impl ChatModel for HttpChatModel {
    fn name(&self) -> &str {
        &self.cfg.model
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let mut attempt = 0;
        loop {
            match self.send_once(req) {
                Ok(s) => return Ok(s),
                Err(e) if e.is_retryable() && attempt < self.cfg.max_retries => {
                    attempt += 1;
                    log::warn!("{}: attempt {attempt} failed: {e}", self.cfg.model);
                    std::thread::sleep(Duration::from_millis(self.cfg.backoff_ms.saturating_mul(1 << attempt.min(6))));
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Runs `f` over `items` on at most `max_inflight` threads, keeping input
/// order in the output.
pub fn map_bounded<T, R, F>(items: &[T], max_inflight: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Send + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(max_inflight.max(1)).build().expect("thread pool");
    pool.install(|| items.par_iter().map(&f).collect())
}

/// Model backed by a closure.
pub struct FnModel<F> {
    name: String,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnModel { name: name.into(), f }
    }
}

impl<F> ChatModel for FnModel<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        (self.f)(req)
    }
}

pub const SQL_MARKER: &str = "The given SQL query: ";
pub const QUESTION_MARKER: &str = "The given natural language question: ";
pub const ECHO_PREFIX: &str = "Q: ";

/// The paragraph following `marker`, up to the next blank line.
pub fn field_after<'a>(prompt: &'a str, marker: &str) -> Option<&'a str> {
    let start = prompt.find(marker)? + marker.len();
    let rest = &prompt[start..];
    Some(rest.split("\n\n").next().unwrap_or(rest))
}

/// Converter mock. SQL becomes the question `Q: <sql>`; back-translation
/// strips the prefix, optionally through a rewrite table.
pub struct EchoConverter {
    rewrites: HashMap<String, String>,
}

impl EchoConverter {
    pub fn new() -> Self {
        EchoConverter { rewrites: HashMap::new() }
    }

    /// Back-translates `from` to `to` instead of echoing it.
    pub fn with_rewrite(mut self, from: impl Into<String>, to: impl Into<String>) -> Self {
        self.rewrites.insert(from.into(), to.into());
        self
    }
}

impl Default for EchoConverter {
    fn default() -> Self {
        Self::new()
    }
}

impl ChatModel for EchoConverter {
    fn name(&self) -> &str {
        "mock-echo"
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let p = req.prompt();
        if let Some(sql) = field_after(p, SQL_MARKER) {
            let q = format!("{ECHO_PREFIX}{sql}");
            return Ok(serde_json::json!({"sql": sql, "question": q}).to_string());
        }
        if let Some(q) = field_after(p, QUESTION_MARKER) {
            let sql = q.strip_prefix(ECHO_PREFIX).unwrap_or(q);
            let sql = self.rewrites.get(sql).map(String::as_str).unwrap_or(sql);
            return Ok(serde_json::json!({"question": q, "sql": sql}).to_string());
        }
        Err(LlmError::Decode("echo converter: unrecognized prompt".into()))
    }
}

/// Converter mock whose back-translation is always the same SQL.
pub struct FixedSqlConverter {
    pub sql: String,
}

impl ChatModel for FixedSqlConverter {
    fn name(&self) -> &str {
        "mock-fixed-sql"
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let p = req.prompt();
        if let Some(sql) = field_after(p, SQL_MARKER) {
            return Ok(serde_json::json!({"sql": sql, "question": format!("{ECHO_PREFIX}{sql}")}).to_string());
        }
        let q = field_after(p, QUESTION_MARKER).unwrap_or("");
        Ok(serde_json::json!({"question": q, "sql": self.sql}).to_string())
    }
}

/// Evaluee mock answering with the gold answer registered for the exact
/// prompt (keyed by sha256), or "NULL" for unknown prompts.
pub struct GoldEcho {
    answers: HashMap<String, String>,
}

impl GoldEcho {
    pub fn new() -> Self {
        GoldEcho { answers: HashMap::new() }
    }

    pub fn register(&mut self, prompt: &str, gold: impl Into<String>) {
        self.answers.insert(sha256_hex(prompt.as_bytes()), gold.into());
    }
}

impl Default for GoldEcho {
    fn default() -> Self {
        Self::new()
    }
}

impl ChatModel for GoldEcho {
    fn name(&self) -> &str {
        "mock-gold-echo"
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        Ok(self.answers.get(&sha256_hex(req.prompt().as_bytes())).cloned().unwrap_or_else(|| "NULL".into()))
    }
}

/// Evaluee mock answering with a fresh random UUID.
pub struct UuidModel;

impl ChatModel for UuidModel {
    fn name(&self) -> &str {
        "mock-uuid"
    }

    fn complete(&self, _req: &ChatRequest) -> Result<String, LlmError> {
        Ok(uuid::Uuid::new_v4().to_string())
    }
}

pub struct ConstantModel {
    pub answer: String,
}

impl ChatModel for ConstantModel {
    fn name(&self) -> &str {
        "mock-constant"
    }

    fn complete(&self, _req: &ChatRequest) -> Result<String, LlmError> {
        Ok(self.answer.clone())
    }
}

/// Rejects prompts longer than `max_chars` as over the context window.
pub struct ContextLimitModel {
    pub max_chars: usize,
    pub answer: String,
}

impl ChatModel for ContextLimitModel {
    fn name(&self) -> &str {
        "mock-context-limit"
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        if req.prompt().chars().count() > self.max_chars {
            Err(LlmError::ContextLength)
        } else {
            Ok(self.answer.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn debug_never_shows_key_values() {
        let cfg = EndpointConfig { api_key_env: Some("SOME_VAR".into()), ..Default::default() };
        let s = format!("{cfg:?}");
        assert!(s.contains("SOME_VAR"));
    }

    #[test]
    fn missing_key_is_reported() {
        let cfg = EndpointConfig { api_key_env: Some("LCQA_SURELY_UNSET_VAR".into()), ..Default::default() };
        assert!(matches!(HttpChatModel::new(cfg), Err(LlmError::MissingKey(v)) if v == "LCQA_SURELY_UNSET_VAR"));
    }

    #[test]
    fn context_errors_detected() {
        assert!(is_context_error(400, r#"{"error":{"code":"context_length_exceeded"}}"#));
        assert!(is_context_error(400, "This model's maximum context length is 8192 tokens"));
        assert!(!is_context_error(400, "bad request"));
        assert!(LlmError::Http { status: 503, body: String::new() }.is_retryable());
        assert!(!LlmError::Http { status: 400, body: String::new() }.is_retryable());
    }

    #[test]
    fn echo_round_trip() {
        let m = EchoConverter::new().with_rewrite("SELECT 1", "SELECT 2");
        let cfg = EndpointConfig::default();
        let out = m.complete(&cfg.request("x\n\nThe given SQL query: SELECT 1\n\nmore")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["question"], "Q: SELECT 1");
        let out = m.complete(&cfg.request("The given natural language question: Q: SELECT 1\n\nDo")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["sql"], "SELECT 2");
    }

    #[test]
    fn limiter_spaces_requests() {
        let l = RateLimiter::new(50.0, 1.0);
        let t = Instant::now();
        for _ in 0..6 {
            l.acquire();
        }
        assert!(t.elapsed() >= Duration::from_millis(90));
    }

    #[test]
    fn bounded_map_keeps_order() {
        let v: Vec<u32> = (0..100).collect();
        assert_eq!(map_bounded(&v, 3, |x| x * 2), v.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
