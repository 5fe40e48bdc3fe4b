//! OpenAI-compatible `/completions` client with retries.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use log::{debug, warn};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{cut_at_stop, Backend, BackendConfig, CallContext, GatewayError, GenerationRequest, GenerationResponse};

const MAX_BACKOFF: Duration = Duration::from_secs(30);

pub struct RemoteBackend {
    client: Client,
    url: String,
    model: String,
    token: Option<String>,
    max_retries: u32,
    backoff_initial: Duration,
    retries: AtomicU64,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("url", &self.url)
            .field("model", &self.model)
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .field("max_retries", &self.max_retries)
            .finish()
    }
}

#[derive(Serialize)]
struct CompletionBody<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    stop: &'a [String],
    temperature: f64,
}

#[derive(Deserialize)]
struct CompletionReply {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
}

enum Attempt {
    Done(Result<GenerationResponse, GatewayError>),
    Retry {
        error: GatewayError,
        delay: Option<Duration>,
    },
}

impl RemoteBackend {
    /// Reads the bearer token from the configured environment variable.
    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let token = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| GatewayError::Auth(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let endpoint = config.endpoint.clone().unwrap_or_default();
        Self::new(
            &endpoint,
            config.model.as_deref().unwrap_or_default(),
            token,
            Duration::from_secs(config.timeout_secs.max(1)),
            config.max_retries,
            Duration::from_millis(config.backoff_initial_ms),
        )
    }

    pub fn new(
        endpoint: &str,
        model: &str,
        token: Option<String>,
        timeout: Duration,
        max_retries: u32,
        backoff_initial: Duration,
    ) -> Result<Self, GatewayError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(RemoteBackend {
            client,
            url: format!("{}/completions", endpoint.trim_end_matches('/')),
            model: model.to_string(),
            token,
            max_retries,
            backoff_initial,
            retries: AtomicU64::new(0),
        })
    }

    /// Total retries issued so far, across all requests.
    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    fn backoff(&self, retry: u32) -> Duration {
        self.backoff_initial
            .saturating_mul(2u32.saturating_pow(retry))
            .min(MAX_BACKOFF)
    }

    fn attempt(&self, request: &GenerationRequest, attempts: u32) -> Attempt {
        let body = CompletionBody {
            model: &self.model,
            prompt: &request.prompt,
            max_tokens: request.max_new_tokens,
            stop: &request.stop_sequences,
            temperature: request.temperature,
        };
        let mut builder = self.client.post(&self.url).json(&body);
        if let Some(token) = &self.token {
            builder = builder.bearer_auth(token);
        }
        let response = match builder.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => {
                return Attempt::Retry {
                    error: GatewayError::Timeout { attempts },
                    delay: None,
                }
            }
            Err(e) => {
                return Attempt::Retry {
                    error: GatewayError::Transport(e.without_url().to_string()),
                    delay: None,
                }
            }
        };
        let status = response.status();
        match status {
            StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => {
                Attempt::Done(Err(GatewayError::Auth(format!("HTTP {}", status.as_u16()))))
            }
            StatusCode::TOO_MANY_REQUESTS => {
                let delay = response
                    .headers()
                    .get(reqwest::header::RETRY_AFTER)
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .filter(|secs| secs.is_finite() && *secs >= 0.0)
                    .map(|secs| Duration::from_secs_f64(secs).min(MAX_BACKOFF));
                Attempt::Retry {
                    error: GatewayError::RateLimited { attempts },
                    delay,
                }
            }
            s if s.is_server_error() => Attempt::Retry {
                error: GatewayError::Server {
                    status: s.as_u16(),
                    attempts,
                },
                delay: None,
            },
            s if !s.is_success() => {
                let body = response.text().unwrap_or_default();
                Attempt::Done(Err(GatewayError::Http {
                    status: s.as_u16(),
                    body: body.chars().take(200).collect(),
                }))
            }
            _ => Attempt::Done(parse_reply(response, request)),
        }
    }
}

fn parse_reply(
    response: reqwest::blocking::Response,
    request: &GenerationRequest,
) -> Result<GenerationResponse, GatewayError> {
    let bytes = response
        .bytes()
        .map_err(|e| GatewayError::Transport(e.without_url().to_string()))?;
    let reply: CompletionReply = serde_json::from_slice(&bytes).map_err(|e| GatewayError::Malformed(e.to_string()))?;
    let choice = reply
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::Malformed("no choices in reply".into()))?;
    let reason = choice.finish_reason.unwrap_or_default();
    // Some servers echo the stop sequence back; strip it and treat it as a stop.
    if let Some(cut) = cut_at_stop(&choice.text, &request.stop_sequences) {
        return Ok(GenerationResponse::from_finish_reason(cut, "stop"));
    }
    Ok(GenerationResponse::from_finish_reason(choice.text, reason))
}

impl Backend for RemoteBackend {
    fn complete(&self, request: &GenerationRequest, _call: CallContext) -> Result<GenerationResponse, GatewayError> {
        let mut retry = 0;
        loop {
            match self.attempt(request, retry + 1) {
                Attempt::Done(result) => return result,
                Attempt::Retry { error, delay } => {
                    if retry >= self.max_retries {
                        warn!("giving up after {} attempt(s): {error}", retry + 1);
                        return Err(error);
                    }
                    let wait = delay.unwrap_or_else(|| self.backoff(retry));
                    debug!("retrying in {wait:?} after: {error}");
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    std::thread::sleep(wait);
                    retry += 1;
                }
            }
        }
    }

    fn name(&self) -> &str {
        "remote"
    }
}
