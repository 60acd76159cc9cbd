//! Vendor-neutral HTTP backend.
//!
//! `POST <endpoint>` with `{"prompt", "temperature", "max_output_tokens"}`,
//! expecting `{"text": ...}` back. A bearer token is read from
//! `TRIAGE_LLM_TOKEN` when set.

use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use super::backend::{LlmBackend, LlmRequest, TransportError};
use crate::error::{Error, Result};

pub const TOKEN_ENV: &str = "TRIAGE_LLM_TOKEN";
pub const ENDPOINT_ENV: &str = "TRIAGE_LLM_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    60_000
}

#[derive(Debug, Serialize)]
struct RequestBody<'a> {
    prompt: &'a str,
    temperature: f64,
    max_output_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct ResponseBody {
    text: String,
}

#[derive(Debug)]
pub struct HttpBackend {
    config: HttpBackendConfig,
    token: Option<String>,
    client: Client,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig, token: Option<String>) -> Result<Self> {
        let client = Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self { config, token, client })
    }

    /// Reads the token from the environment.
    pub fn from_env(config: HttpBackendConfig) -> Result<Self> {
        let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        Self::new(config, token)
    }

    pub fn endpoint(&self) -> &str {
        &self.config.endpoint
    }
}

impl LlmBackend for HttpBackend {
    fn name(&self) -> String {
        match &self.config.model {
            Some(m) => format!("http:{m}"),
            None => format!("http:{}", self.config.endpoint),
        }
    }

    fn complete(&self, req: &LlmRequest) -> Result<String, TransportError> {
        let body = RequestBody {
            prompt: &req.prompt,
            temperature: req.temperature,
            max_output_tokens: req.max_output_tokens,
        };
        let mut builder = self.client.post(&self.config.endpoint).json(&body);
        if let Some(token) = &self.token {
            builder = builder.bearer_auth(token);
        }
        let resp = builder
            .send()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(TransportError::Transient(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(TransportError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str::<ResponseBody>(&text)
            .map(|r| r.text)
            .map_err(|_| TransportError::Status {
                status: status.as_u16(),
                body: text,
            })
    }

    fn probe(&self) -> bool {
        reqwest::Url::parse(&self.config.endpoint).is_ok()
    }
}
