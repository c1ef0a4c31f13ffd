//! Provider-agnostic chat completion with strict answer parsing, retries,
//! pacing and a transcript cache.

mod agent;
mod cache;
pub mod pacing;
pub mod providers;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use peerflip_core::{parse_answer, seed, Answer};

pub use agent::LlmAgent;
pub use cache::{cache_key_hash, TranscriptCache};
use pacing::{Clock, InFlight, RateLimiter};

/// The single internal request shape; adapters translate it per vendor.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub prompt: String,
    /// Left unset unless explicitly configured.
    pub temperature: Option<f64>,
    /// Only simulated transports read this.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("provider rate limit hit")]
    RateLimited,
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("unexpected response shape: {0}")]
    Malformed(String),
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::RateLimited | TransportError::Network(_) => true,
            TransportError::Http { status, .. } => *status >= 500,
            TransportError::Malformed(_) => false,
        }
    }
}

pub trait Transport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        (**self).complete(request)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        (**self).complete(request)
    }
}

/// Everything sent and received for one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmTranscript {
    pub model: String,
    pub prompt: String,
    /// Raw reply of every attempt, in order.
    pub responses: Vec<String>,
    /// `Yes`/`No`, absent when no attempt parsed.
    pub answer: Option<String>,
    pub attempts: u32,
    pub started_ms: u64,
    pub finished_ms: u64,
}

impl LlmTranscript {
    pub fn parsed(&self) -> Option<Answer> {
        self.answer.as_deref().and_then(|a| a.parse().ok())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("retry budget must be at least 1")]
    ZeroBudget,
    #[error("no valid answer in {} attempts", .0.attempts)]
    AllInvalid(Box<LlmTranscript>),
    #[error("transport failed after {attempts} attempts: {source}")]
    Transport {
        attempts: u32,
        #[source]
        source: TransportError,
    },
}

/// Pacing and retry settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatewaySettings {
    pub retry_budget: u32,
    pub max_in_flight: usize,
    pub requests_per_minute: u32,
    pub backoff: Duration,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        GatewaySettings {
            retry_budget: 3,
            max_in_flight: 4,
            requests_per_minute: 60,
            backoff: Duration::from_secs(2),
        }
    }
}

pub struct Gateway<T> {
    transport: T,
    model: String,
    temperature: Option<f64>,
    settings: GatewaySettings,
    limiter: RateLimiter,
    slots: InFlight,
    clock: Arc<dyn Clock>,
}

impl<T: Transport> Gateway<T> {
    pub fn new(transport: T, model: impl Into<String>, settings: GatewaySettings, clock: Arc<dyn Clock>) -> Self {
        Gateway {
            transport,
            model: model.into(),
            temperature: None,
            limiter: RateLimiter::per_minute(settings.requests_per_minute),
            slots: InFlight::new(settings.max_in_flight),
            settings,
            clock,
        }
    }

    pub fn with_temperature(mut self, temperature: Option<f64>) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn settings(&self) -> &GatewaySettings {
        &self.settings
    }

    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        self.limiter.acquire(self.clock.as_ref());
        let _slot = self.slots.acquire();
        self.transport.complete(request)
    }

    /// Ask until a reply parses, re-sending the identical prompt on invalid
    /// replies and retryable transport errors, up to the retry budget.
    pub fn query_decision(&self, prompt: &str, seed_value: u64) -> Result<(Answer, LlmTranscript), GatewayError> {
        let budget = self.settings.retry_budget;
        if budget == 0 {
            return Err(GatewayError::ZeroBudget);
        }
        let ms = |d: Duration| d.as_millis() as u64;
        let mut transcript = LlmTranscript {
            model: self.model.clone(),
            prompt: prompt.to_string(),
            responses: Vec::new(),
            answer: None,
            attempts: 0,
            started_ms: ms(self.clock.now()),
            finished_ms: 0,
        };
        for attempt in 1..=budget {
            transcript.attempts = attempt;
            let request = ChatRequest {
                model: self.model.clone(),
                prompt: prompt.to_string(),
                temperature: self.temperature,
                seed: seed::derive(seed_value, &[u64::from(attempt)]),
            };
            match self.send(&request) {
                Ok(text) => {
                    let parsed = parse_answer(&text);
                    transcript.responses.push(text);
                    if let Some(answer) = parsed {
                        transcript.answer = Some(answer.to_string());
                        transcript.finished_ms = ms(self.clock.now());
                        return Ok((answer, transcript));
                    }
                }
                Err(e) if e.is_retryable() && attempt < budget => {
                    self.clock.sleep(self.settings.backoff * (1 << (attempt - 1)));
                }
                Err(source) => {
                    return Err(GatewayError::Transport {
                        attempts: attempt,
                        source,
                    })
                }
            }
        }
        transcript.finished_ms = ms(self.clock.now());
        Err(GatewayError::AllInvalid(Box::new(transcript)))
    }
}
