use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl LlmRequest {
    pub fn greedy(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: 0.0,
            max_output_tokens: 256,
        }
    }
}

/// Failure of a single backend attempt.
#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    /// Worth retrying: connection failures, timeouts, 5xx, 429.
    Transient(String),
    /// Final answer from the backend.
    Status { status: u16, body: String },
}

pub trait LlmBackend: Send + Sync {
    fn name(&self) -> String;

    /// One attempt, no retries.
    fn complete(&self, req: &LlmRequest) -> Result<String, TransportError>;

    /// Cheap liveness check.
    fn probe(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            base_delay_ms: 200,
        }
    }
}

const EXCERPT_CHARS: usize = 200;

/// Calls `backend` once, retrying transient failures with exponential
/// backoff. At most `1 + max_retries` attempts are made.
pub fn call_backend(req: &LlmRequest, backend: &dyn LlmBackend, retry: &RetryPolicy) -> Result<String> {
    if req.temperature.is_nan() || req.temperature < 0.0 {
        return Err(Error::Config(format!("temperature {} is negative", req.temperature)));
    }
    let mut last = String::new();
    for attempt in 0..=retry.max_retries {
        if attempt > 0 {
            let delay = retry.base_delay_ms.saturating_mul(1 << (attempt - 1).min(16));
            thread::sleep(Duration::from_millis(delay));
        }
        match backend.complete(req) {
            Ok(text) => return Ok(text),
            Err(TransportError::Status { status, body }) => {
                return Err(Error::BackendError {
                    status,
                    excerpt: body.chars().take(EXCERPT_CHARS).collect(),
                })
            }
            Err(TransportError::Transient(reason)) => {
                log::warn!("{} attempt {} failed: {reason}", backend.name(), attempt + 1);
                last = reason;
            }
        }
    }
    Err(Error::BackendUnavailable {
        attempts: retry.max_retries + 1,
        reason: last,
    })
}
