//! Text-completion backends behind one interface.
//!
//! [`Gateway`] owns a [`Backend`] and runs batches on a bounded pool of
//! worker threads. Responses always come back in request order, whatever
//! order the backend finishes them in.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

mod mock;
mod remote;

pub use mock::{MockBackend, MockEntry, MockFailure, MockFallback, MockScript};
pub use remote::RemoteBackend;

pub const MAX_STOP_SEQUENCES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_new_tokens: u32,
    pub stop_sequences: Vec<String>,
    pub temperature: f64,
}

impl GenerationRequest {
    /// Greedy request with the given stop sequences.
    pub fn new(
        prompt: impl Into<String>,
        max_new_tokens: u32,
        stop_sequences: Vec<String>,
    ) -> Result<Self, GatewayError> {
        let request = GenerationRequest {
            prompt: prompt.into(),
            max_new_tokens,
            stop_sequences,
            temperature: 0.0,
        };
        request.validate()?;
        Ok(request)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_new_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_new_tokens must be at least 1".into()));
        }
        if self.stop_sequences.len() > MAX_STOP_SEQUENCES {
            return Err(GatewayError::InvalidRequest(format!(
                "at most {MAX_STOP_SEQUENCES} stop sequences, got {}",
                self.stop_sequences.len()
            )));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResponse {
    /// Completion text, stop sequence excluded.
    pub text: String,
    pub terminated_by_stop: bool,
    pub raw_finish_reason: String,
}

impl GenerationResponse {
    /// Maps a backend finish reason: only `"stop"` counts as stopping on a stop sequence.
    pub fn from_finish_reason(text: impl Into<String>, reason: impl Into<String>) -> Self {
        let raw_finish_reason = reason.into();
        GenerationResponse {
            text: text.into(),
            terminated_by_stop: raw_finish_reason == "stop",
            raw_finish_reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("server error {status} after {attempts} attempt(s)")]
    Server { status: u16, attempts: u32 },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed backend payload: {0}")]
    Malformed(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no scripted completion for prompt {prompt_sha256}")]
    Unscripted { prompt_sha256: String },
    #[error("backend configuration: {0}")]
    Config(String),
}

impl GatewayError {
    /// Short stable label, used in manifests.
    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::InvalidRequest(_) => "invalid_request",
            GatewayError::EmptyBatch => "empty_batch",
            GatewayError::Timeout { .. } => "timeout",
            GatewayError::Auth(_) => "auth",
            GatewayError::RateLimited { .. } => "rate_limited",
            GatewayError::Server { .. } => "server",
            GatewayError::Http { .. } => "http",
            GatewayError::Malformed(_) => "malformed",
            GatewayError::Transport(_) => "transport",
            GatewayError::Unscripted { .. } => "unscripted",
            GatewayError::Config(_) => "config",
        }
    }
}

/// Per-call information a backend may key on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallContext {
    /// How many identical prompts this gateway dispatched before this one.
    pub ordinal: u64,
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &GenerationRequest, call: CallContext) -> Result<GenerationResponse, GatewayError>;

    fn name(&self) -> &str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Mock,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_retries() -> u32 {
    3
}

fn default_max_in_flight() -> usize {
    4
}

fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Base URL; requests go to `<endpoint>/completions`.
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_backoff_ms")]
    pub backoff_initial_ms: u64,
    /// Script file for the mock backend; echo-only when absent.
    #[serde(default)]
    pub mock_script: Option<PathBuf>,
}

impl BackendConfig {
    pub fn mock() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            endpoint: None,
            model: None,
            api_key_env: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            max_in_flight: default_max_in_flight(),
            backoff_initial_ms: default_backoff_ms(),
            mock_script: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_in_flight == 0 {
            return Err(GatewayError::Config("max_in_flight must be at least 1".into()));
        }
        if self.kind == BackendKind::Remote {
            if self.endpoint.as_deref().unwrap_or("").is_empty() {
                return Err(GatewayError::Config("remote backend needs an endpoint".into()));
            }
            if self.model.as_deref().unwrap_or("").is_empty() {
                return Err(GatewayError::Config("remote backend needs a model name".into()));
            }
        }
        Ok(())
    }
}

/// Hex SHA-256 of a prompt, the key scripted mock responses are stored under.
pub fn prompt_sha256(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub requests: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub terminated_by_stop: usize,
    pub errors_by_kind: std::collections::BTreeMap<String, usize>,
}

pub struct Gateway {
    backend: Box<dyn Backend>,
    max_in_flight: usize,
    dispatched: Mutex<HashMap<String, u64>>,
    stats: Mutex<GatewayStats>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.name())
            .field("max_in_flight", &self.max_in_flight)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>, max_in_flight: usize) -> Result<Self, GatewayError> {
        if max_in_flight == 0 {
            return Err(GatewayError::Config("max_in_flight must be at least 1".into()));
        }
        Ok(Gateway {
            backend,
            max_in_flight,
            dispatched: Mutex::new(HashMap::new()),
            stats: Mutex::new(GatewayStats::default()),
        })
    }

    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let backend: Box<dyn Backend> = match config.kind {
            BackendKind::Mock => match &config.mock_script {
                Some(path) => Box::new(MockBackend::from_script(MockScript::load(path)?)),
                None => Box::new(MockBackend::echo()),
            },
            BackendKind::Remote => Box::new(RemoteBackend::from_config(config)?),
        };
        Gateway::new(backend, config.max_in_flight)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    pub fn set_max_in_flight(&mut self, cap: usize) -> Result<(), GatewayError> {
        if cap == 0 {
            return Err(GatewayError::Config("max_in_flight must be at least 1".into()));
        }
        self.max_in_flight = cap;
        Ok(())
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn stats(&self) -> GatewayStats {
        self.stats.lock().expect("stats lock").clone()
    }

    pub fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        let mut results = self.generate_batch(std::slice::from_ref(request))?;
        results.pop().expect("one result per request")
    }

    /// Runs every request with at most `max_in_flight` outstanding at once.
    ///
    /// `result[i]` answers `requests[i]`. A failed request leaves its error in
    /// its own slot and does not stop the rest of the batch.
    pub fn generate_batch(
        &self,
        requests: &[GenerationRequest],
    ) -> Result<Vec<Result<GenerationResponse, GatewayError>>, GatewayError> {
        if requests.is_empty() {
            return Err(GatewayError::EmptyBatch);
        }
        let contexts = self.assign_ordinals(requests);
        let slots: Vec<Mutex<Option<Result<GenerationResponse, GatewayError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.max_in_flight.min(requests.len());
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, Ordering::Relaxed);
                    if idx >= requests.len() {
                        break;
                    }
                    let request = &requests[idx];
                    let result = request
                        .validate()
                        .and_then(|()| self.backend.complete(request, contexts[idx]));
                    *slots[idx].lock().expect("slot lock") = Some(result);
                });
            }
        });
        let results: Vec<_> = slots
            .into_iter()
            .map(|slot| slot.into_inner().expect("slot lock").expect("every slot filled"))
            .collect();
        self.record(&results);
        Ok(results)
    }

    fn assign_ordinals(&self, requests: &[GenerationRequest]) -> Vec<CallContext> {
        let mut dispatched = self.dispatched.lock().expect("dispatch lock");
        requests
            .iter()
            .map(|r| {
                let count = dispatched.entry(prompt_sha256(&r.prompt)).or_insert(0);
                let ordinal = *count;
                *count += 1;
                CallContext { ordinal }
            })
            .collect()
    }

    fn record(&self, results: &[Result<GenerationResponse, GatewayError>]) {
        let mut stats = self.stats.lock().expect("stats lock");
        for result in results {
            stats.requests += 1;
            match result {
                Ok(response) => {
                    stats.succeeded += 1;
                    if response.terminated_by_stop {
                        stats.terminated_by_stop += 1;
                    }
                }
                Err(err) => {
                    stats.failed += 1;
                    *stats.errors_by_kind.entry(err.kind().to_string()).or_default() += 1;
                }
            }
        }
    }
}

/// Cuts `text` at the earliest stop sequence, if any occurs.
pub(crate) fn cut_at_stop<'a>(text: &'a str, stops: &[String]) -> Option<&'a str> {
    stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .map(|pos| &text[..pos])
}
