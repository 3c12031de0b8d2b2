use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fsutil::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage { role, content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("server answered HTTP {0}")]
    HttpStatus(u16),
    #[error("credential variable `{0}` is not set")]
    AuthMissing(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("no recorded response for digest {0}")]
    FixtureMiss(String),
    #[error("message {0} has empty content")]
    EmptyMessage(usize),
    #[error("malformed server response: {0}")]
    BadResponse(String),
    #[error("fixture store: {0}")]
    Io(String),
}

/// A chat model. Implementations must be safe to call concurrently.
pub trait MllmBackend: Send + Sync {
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, BackendError>;

    fn name(&self) -> &str;
}

impl<B: MllmBackend + ?Sized> MllmBackend for Arc<B> {
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        (**self).chat(messages)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

fn check_messages(messages: &[ChatMessage]) -> Result<(), BackendError> {
    match messages.iter().position(|m| m.content.trim().is_empty()) {
        Some(i) => Err(BackendError::EmptyMessage(i)),
        None => Ok(()),
    }
}

/// Hex SHA-256 of the compact JSON array of `{role, content}` objects.
pub fn message_digest(messages: &[ChatMessage]) -> String {
    let json = serde_json::to_vec(messages).expect("messages serialize");
    hex::encode(Sha256::digest(&json))
}

enum FixtureMode {
    Replay,
    Record(Arc<dyn MllmBackend>),
}

/// Responses keyed by [`message_digest`]: `<digest>.txt` holds the reply and
/// `<digest>.meta` a readable copy of the request. In record mode a miss is
/// forwarded to the live backend and written through.
pub struct FixtureBackend {
    dir: PathBuf,
    mode: FixtureMode,
    writes: Mutex<()>,
}

impl FixtureBackend {
    pub fn replay(dir: impl Into<PathBuf>) -> Self {
        FixtureBackend { dir: dir.into(), mode: FixtureMode::Replay, writes: Mutex::new(()) }
    }

    pub fn record(dir: impl Into<PathBuf>, live: Arc<dyn MllmBackend>) -> Self {
        FixtureBackend { dir: dir.into(), mode: FixtureMode::Record(live), writes: Mutex::new(()) }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn response_path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.txt"))
    }

    /// Stores `response` for `messages`, overwriting any previous entry.
    pub fn store(&self, messages: &[ChatMessage], response: &str) -> Result<String, BackendError> {
        let digest = message_digest(messages);
        let _guard = self.writes.lock().unwrap_or_else(|e| e.into_inner());
        let io = |e: std::io::Error| BackendError::Io(e.to_string());
        std::fs::create_dir_all(&self.dir).map_err(io)?;
        let mut meta = format!("digest: {digest}\n");
        for m in messages {
            meta.push_str(&format!("--- {}\n{}\n", m.role, m.content));
        }
        write_atomic(&self.dir.join(format!("{digest}.meta")), meta.as_bytes()).map_err(io)?;
        write_atomic(&self.response_path(&digest), response.as_bytes()).map_err(io)?;
        Ok(digest)
    }
}

impl MllmBackend for FixtureBackend {
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        check_messages(messages)?;
        let digest = message_digest(messages);
        match std::fs::read_to_string(self.response_path(&digest)) {
            Ok(text) => Ok(text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => match &self.mode {
                FixtureMode::Replay => Err(BackendError::FixtureMiss(digest)),
                FixtureMode::Record(live) => {
                    let text = live.chat(messages)?;
                    self.store(messages, &text)?;
                    Ok(text)
                }
            },
            Err(e) => Err(BackendError::Io(e.to_string())),
        }
    }

    fn name(&self) -> &str {
        match self.mode {
            FixtureMode::Replay => "fixtures",
            FixtureMode::Record(_) => "fixtures+record",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout: Duration,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4".into(),
            api_key_env: "RPG_API_KEY".into(),
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Network(e.to_string()))?;
        Ok(HttpBackend { config, client })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }
}

fn network(e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout
    } else {
        BackendError::Network(e.to_string())
    }
}

impl MllmBackend for HttpBackend {
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        check_messages(messages)?;
        let key = std::env::var(&self.config.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| BackendError::AuthMissing(self.config.api_key_env.clone()))?;
        let response = self
            .client
            .post(&self.config.endpoint)
            .bearer_auth(key)
            .json(&CompletionRequest { model: &self.config.model, messages })
            .send()
            .map_err(network)?;
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError::HttpStatus(status.as_u16()));
        }
        let body: CompletionResponse = response.json().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::BadResponse(e.to_string())
            }
        })?;
        body.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| BackendError::BadResponse("no choices".into()))
    }

    fn name(&self) -> &str {
        "http"
    }
}
