//! Completion backends: a live OpenAI-compatible HTTP client and a
//! record/replay cassette.
//!
//! ## Request hash
//!
//! Cassettes are keyed by the lowercase hex SHA-256 of this byte string
//! (all integers in ASCII decimal, all text UTF-8):
//!
//! ```text
//! translit-icl/request/v1\n
//! prompt:<byte length>:<prompt>\n
//! max_new_tokens:<n>\n
//! temperature:<IEEE-754 bits of the f64, 16 lowercase hex digits>\n
//! stop:<count>\n
//! <byte length>:<stop sequence>\n      (once per stop sequence, in order)
//! ```
//!
//! ## Cassette
//!
//! JSON lines, one object per recorded completion:
//! `{"hash": ..., "request": {summary}, "response": "<continuation>"}`.
//! Only `hash` and `response` are read back; the summary is for humans.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Condvar, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("replay miss: no cassette entry for request {hash}")]
    ReplayMiss { hash: String },
    #[error("HTTP {status} from {url}: {body}")]
    Status {
        status: u16,
        url: String,
        body: String,
    },
    #[error("prompt exceeds the model context window: {0}")]
    PromptTooLong(String),
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed response: {0}")]
    BadResponse(String),
    #[error("cassette {path}: {message}")]
    Cassette { path: PathBuf, message: String },
    #[error(
        "invalid backend spec {0:?}: expected live:<url>, replay:<file> or record:<file>=<url>"
    )]
    BadSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub stop_sequences: Vec<String>,
}

impl CompletionRequest {
    /// Greedy request with no stop sequences.
    pub fn new(prompt: impl Into<String>, max_new_tokens: u32) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            max_new_tokens,
            temperature: 0.0,
            stop_sequences: Vec::new(),
        }
    }

    pub fn with_stop(mut self, stop: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.stop_sequences = stop.into_iter().map(Into::into).collect();
        self
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.prompt.len() + 128);
        out.extend_from_slice(b"translit-icl/request/v1\n");
        out.extend_from_slice(format!("prompt:{}:", self.prompt.len()).as_bytes());
        out.extend_from_slice(self.prompt.as_bytes());
        out.extend_from_slice(format!("\nmax_new_tokens:{}\n", self.max_new_tokens).as_bytes());
        out.extend_from_slice(
            format!("temperature:{:016x}\n", self.temperature.to_bits()).as_bytes(),
        );
        out.extend_from_slice(format!("stop:{}\n", self.stop_sequences.len()).as_bytes());
        for s in &self.stop_sequences {
            out.extend_from_slice(format!("{}:", s.len()).as_bytes());
            out.extend_from_slice(s.as_bytes());
            out.push(b'\n');
        }
        out
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    /// Continuation only; the prompt is never echoed.
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
    pub from_cache: bool,
}

pub trait CompletionBackend: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, ClientError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Live { url: String },
    Replay { cassette: PathBuf },
    Record { cassette: PathBuf, url: String },
}

impl FromStr for BackendSpec {
    type Err = ClientError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ClientError::BadSpec(s.to_string());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        if rest.is_empty() {
            return Err(bad());
        }
        match kind {
            "live" => Ok(BackendSpec::Live {
                url: rest.to_string(),
            }),
            "replay" => Ok(BackendSpec::Replay {
                cassette: PathBuf::from(rest),
            }),
            "record" => {
                let (file, url) = rest.split_once('=').ok_or_else(bad)?;
                if file.is_empty() || url.is_empty() {
                    return Err(bad());
                }
                Ok(BackendSpec::Record {
                    cassette: PathBuf::from(file),
                    url: url.to_string(),
                })
            }
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendSpec::Live { url } => write!(f, "live:{url}"),
            BackendSpec::Replay { cassette } => write!(f, "replay:{}", cassette.display()),
            BackendSpec::Record { cassette, url } => {
                write!(f, "record:{}={url}", cassette.display())
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CassetteRecord {
    hash: String,
    #[serde(default)]
    request: serde_json::Value,
    response: String,
}

fn summary(request: &CompletionRequest) -> serde_json::Value {
    let preview: String = request
        .prompt
        .chars()
        .rev()
        .take(160)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    serde_json::json!({
        "prompt_chars": request.prompt.chars().count(),
        "prompt_tail": preview,
        "max_new_tokens": request.max_new_tokens,
        "temperature": request.temperature,
        "stop_sequences": request.stop_sequences,
    })
}

fn read_cassette(path: &Path) -> Result<HashMap<String, String>, ClientError> {
    let err = |message: String| ClientError::Cassette {
        path: path.to_path_buf(),
        message,
    };
    let file = File::open(path).map_err(|e| err(e.to_string()))?;
    let mut entries = HashMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CassetteRecord =
            serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", n + 1)))?;
        entries.entry(record.hash).or_insert(record.response);
    }
    Ok(entries)
}

/// One cassette line for `request` answered with `response`.
pub fn cassette_line(request: &CompletionRequest, response: &str) -> String {
    let record = CassetteRecord {
        hash: request.hash(),
        request: summary(request),
        response: response.to_string(),
    };
    serde_json::to_string(&record).expect("cassette record serializes")
}

/// Answers only from a cassette; a miss is an error.
pub struct ReplayBackend {
    path: PathBuf,
    entries: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn open(path: &Path) -> Result<Self, ClientError> {
        Ok(ReplayBackend {
            path: path.to_path_buf(),
            entries: read_cassette(path)?,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl CompletionBackend for ReplayBackend {
    fn id(&self) -> String {
        format!("replay:{}", self.path.display())
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, ClientError> {
        let start = Instant::now();
        let hash = request.hash();
        let text = self
            .entries
            .get(&hash)
            .cloned()
            .ok_or(ClientError::ReplayMiss { hash })?;
        Ok(CompletionResult {
            text,
            backend_id: self.id(),
            latency_ms: start.elapsed().as_millis() as u64,
            from_cache: true,
        })
    }
}

/// Serves cassette hits and forwards misses to `inner`, appending each new
/// response to the cassette file.
pub struct RecordBackend<B> {
    inner: B,
    path: PathBuf,
    entries: RwLock<HashMap<String, String>>,
    writer: Mutex<File>,
}

impl<B: CompletionBackend> RecordBackend<B> {
    pub fn open(path: &Path, inner: B) -> Result<Self, ClientError> {
        let entries = if path.exists() {
            read_cassette(path)?
        } else {
            HashMap::new()
        };
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ClientError::Cassette {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        Ok(RecordBackend {
            inner,
            path: path.to_path_buf(),
            entries: RwLock::new(entries),
            writer: Mutex::new(writer),
        })
    }
}

impl<B: CompletionBackend> CompletionBackend for RecordBackend<B> {
    fn id(&self) -> String {
        format!("record:{}={}", self.path.display(), self.inner.id())
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, ClientError> {
        let start = Instant::now();
        let hash = request.hash();
        if let Some(text) = self.entries.read().expect("cassette lock").get(&hash) {
            return Ok(CompletionResult {
                text: text.clone(),
                backend_id: self.id(),
                latency_ms: start.elapsed().as_millis() as u64,
                from_cache: true,
            });
        }
        let mut result = self.inner.complete(request)?;
        let mut writer = self.writer.lock().expect("cassette lock");
        let mut entries = self.entries.write().expect("cassette lock");
        if let std::collections::hash_map::Entry::Vacant(slot) = entries.entry(hash) {
            writeln!(writer, "{}", cassette_line(request, &result.text))
                .and_then(|_| writer.flush())
                .map_err(|e| ClientError::Cassette {
                    path: self.path.clone(),
                    message: e.to_string(),
                })?;
            slot.insert(result.text.clone());
        }
        result.backend_id = self.id();
        result.from_cache = false;
        Ok(result)
    }
}

/// Counting semaphore bounding in-flight HTTP requests.
struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            permits: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().expect("semaphore");
        while *p == 0 {
            p = self.cv.wait(p).expect("semaphore");
        }
        *p -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore") += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub url: String,
    pub model: Option<String>,
    /// Environment variable holding the bearer token; unset means no auth header.
    pub api_key_env: String,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl LiveConfig {
    pub fn new(url: impl Into<String>) -> Self {
        LiveConfig {
            url: url.into(),
            model: None,
            api_key_env: "OPENAI_API_KEY".into(),
            max_attempts: 4,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
            max_in_flight: 4,
        }
    }
}

/// OpenAI-compatible `/v1/completions` client.
///
/// Sends `{"model", "prompt", "max_tokens", "temperature", "stop"}` and reads
/// `choices[0].text`. Connection failures, timeouts, 429 and 5xx responses are
/// retried with exponential backoff; other statuses fail immediately.
pub struct LiveBackend {
    config: LiveConfig,
    agent: ureq::Agent,
    gate: Semaphore,
}

#[derive(Serialize)]
struct ApiRequest<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    stop: &'a [String],
}

#[derive(Deserialize)]
struct ApiResponse {
    choices: Vec<ApiChoice>,
}

#[derive(Deserialize)]
struct ApiChoice {
    text: String,
}

enum Attempt {
    Retry {
        status: Option<u16>,
        message: String,
    },
    Fail(ClientError),
}

fn transport(e: impl std::fmt::Display) -> Attempt {
    Attempt::Retry {
        status: None,
        message: e.to_string(),
    }
}

fn looks_like_overflow(body: &str) -> bool {
    let b = body.to_ascii_lowercase();
    b.contains("context_length_exceeded")
        || b.contains("maximum context length")
        || b.contains("prompt is too long")
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let gate = Semaphore::new(config.max_in_flight);
        LiveBackend {
            config,
            agent,
            gate,
        }
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<String, Attempt> {
        let body = ApiRequest {
            model: self.config.model.as_deref(),
            prompt: &request.prompt,
            max_tokens: request.max_new_tokens,
            temperature: request.temperature,
            stop: &request.stop_sequences,
        };
        let mut call = self.agent.post(&self.config.url);
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call.send_json(&body).map_err(transport)?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(transport)?;
        match status {
            200..=299 => {
                let parsed: ApiResponse = serde_json::from_str(&text)
                    .map_err(|e| Attempt::Fail(ClientError::BadResponse(e.to_string())))?;
                parsed
                    .choices
                    .into_iter()
                    .next()
                    .map(|c| c.text)
                    .ok_or_else(|| Attempt::Fail(ClientError::BadResponse("no choices".into())))
            }
            400 | 413 if looks_like_overflow(&text) => {
                Err(Attempt::Fail(ClientError::PromptTooLong(text)))
            }
            429 | 500..=599 => Err(Attempt::Retry {
                status: Some(status),
                message: text,
            }),
            _ => Err(Attempt::Fail(ClientError::Status {
                status,
                url: self.config.url.clone(),
                body: text,
            })),
        }
    }
}

impl CompletionBackend for LiveBackend {
    fn id(&self) -> String {
        format!("live:{}", self.config.url)
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, ClientError> {
        let _permit = self.gate.acquire();
        let start = Instant::now();
        let mut delay = self.config.initial_backoff;
        let attempts = self.config.max_attempts.max(1);
        let mut last = (None, String::new());
        for n in 1..=attempts {
            match self.attempt(request) {
                Ok(text) => {
                    return Ok(CompletionResult {
                        text,
                        backend_id: self.id(),
                        latency_ms: start.elapsed().as_millis() as u64,
                        from_cache: false,
                    })
                }
                Err(Attempt::Fail(e)) => return Err(e),
                Err(Attempt::Retry { status, message }) => {
                    last = (status, message);
                    if n < attempts {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        match last {
            (Some(status), body) => Err(ClientError::Status {
                status,
                url: self.config.url.clone(),
                body,
            }),
            (None, message) => Err(ClientError::Transport { attempts, message }),
        }
    }
}

/// Builds the backend named by `spec`. `live` settings other than the URL
/// come from `template`.
pub fn open_backend(
    spec: &BackendSpec,
    template: &LiveConfig,
) -> Result<Box<dyn CompletionBackend>, ClientError> {
    let live = |url: &str| {
        LiveBackend::new(LiveConfig {
            url: url.to_string(),
            ..template.clone()
        })
    };
    Ok(match spec {
        BackendSpec::Live { url } => Box::new(live(url)),
        BackendSpec::Replay { cassette } => Box::new(ReplayBackend::open(cassette)?),
        BackendSpec::Record { cassette, url } => {
            if let Some(parent) = cassette.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| ClientError::Cassette {
                    path: cassette.clone(),
                    message: e.to_string(),
                })?;
            }
            Box::new(RecordBackend::open(cassette, live(url))?)
        }
    })
}
