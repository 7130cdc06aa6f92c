//! Chat-completion client contract, retry with backoff, and rate limiting.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::{Prompt, PromptConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub record_id: String,
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub timeout: Duration,
}

impl ChatRequest {
    pub fn new(record_id: &str, prompt: &Prompt, config: &PromptConfig) -> Self {
        Self {
            record_id: record_id.to_string(),
            model: config.model_name.clone(),
            system: prompt.system.clone(),
            user: prompt.user.clone(),
            temperature: config.temperature,
            timeout: config.request_timeout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("rate limited (HTTP 429)")]
    RateLimited,
    #[error("server error (HTTP {0})")]
    Server(u16),
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request rejected (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    BadResponse(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            ClientError::RateLimited | ClientError::Server(_) | ClientError::Transport(_)
        )
    }
}

/// Anything that turns a chat request into the assistant's message text.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError>;
}

impl<C: ChatClient + ?Sized> ChatClient for &C {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }
}

impl<C: ChatClient + ?Sized> ChatClient for Box<C> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub base_delay_ms: u64,
    pub factor: f64,
    /// Upper bound of the random extra delay, as a fraction of the step.
    pub jitter: f64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base_delay_ms: 1000,
            factor: 2.0,
            jitter: 0.25,
            max_delay_ms: 60_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based), without jitter.
    pub fn base_delay(&self, retry: u32) -> Duration {
        let ms = self.base_delay_ms as f64 * self.factor.powi(retry as i32);
        Duration::from_millis(ms.min(self.max_delay_ms as f64) as u64)
    }

    pub fn delay(&self, retry: u32) -> Duration {
        let base = self.base_delay(retry);
        if self.jitter <= 0.0 || base.is_zero() {
            return base;
        }
        let extra = rand::rng().random_range(0.0..self.jitter);
        base.mul_f64(1.0 + extra)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubmitError {
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: ClientError },
    #[error("timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("request failed after {attempts} attempts: {error}")]
    Failed { attempts: u32, error: ClientError },
}

impl SubmitError {
    pub fn attempts(&self) -> u32 {
        match self {
            SubmitError::Exhausted { attempts, .. }
            | SubmitError::Timeout { attempts }
            | SubmitError::Failed { attempts, .. } => *attempts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Submitted {
    pub text: String,
    pub attempts: u32,
}

/// Sends the prompt, retrying rate-limit, server and transport failures up to
/// `config.max_retries` times with exponential backoff.
pub fn submit(
    record_id: &str,
    prompt: &Prompt,
    config: &PromptConfig,
    retry: &RetryPolicy,
    client: &dyn ChatClient,
) -> Result<Submitted, SubmitError> {
    let request = ChatRequest::new(record_id, prompt, config);
    let mut attempts = 0;
    loop {
        attempts += 1;
        match client.complete(&request) {
            Ok(text) => return Ok(Submitted { text, attempts }),
            Err(ClientError::Timeout) => return Err(SubmitError::Timeout { attempts }),
            Err(e) if e.is_retryable() => {
                if attempts > config.max_retries {
                    return Err(SubmitError::Exhausted { attempts, last: e });
                }
                std::thread::sleep(retry.delay(attempts - 1));
            }
            Err(error) => return Err(SubmitError::Failed { attempts, error }),
        }
    }
}

/// Token bucket refilled continuously at `rate` tokens per second.
#[derive(Debug)]
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(rate: f64, burst: f64) -> Self {
        assert!(rate > 0.0, "token bucket rate must be positive");
        let capacity = burst.max(1.0);
        Self {
            rate,
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().unwrap_or_else(|p| p.into_inner());
                let now = Instant::now();
                let (tokens, last) = *state;
                let refilled = (tokens + now.duration_since(last).as_secs_f64() * self.rate)
                    .min(self.capacity);
                if refilled >= 1.0 {
                    *state = (refilled - 1.0, now);
                    return;
                }
                *state = (refilled, now);
                Duration::from_secs_f64((1.0 - refilled) / self.rate)
            };
            std::thread::sleep(wait);
        }
    }
}

/// Wraps a client so every request first takes a token from a shared bucket.
pub struct RateLimited<C> {
    inner: C,
    bucket: TokenBucket,
}

impl<C: ChatClient> RateLimited<C> {
    pub fn new(inner: C, requests_per_second: f64) -> Self {
        Self {
            inner,
            bucket: TokenBucket::new(requests_per_second, requests_per_second),
        }
    }
}

impl<C: ChatClient> ChatClient for RateLimited<C> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        self.bucket.acquire();
        self.inner.complete(request)
    }
}
