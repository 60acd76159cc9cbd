//! Tier-H: retrieval-augmented LLM decision.

mod backend;
mod http;
mod mock;
mod parse;
mod prompt;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use backend::{call_backend, LlmBackend, LlmRequest, RetryPolicy, TransportError};
pub use http::{HttpBackend, HttpBackendConfig, ENDPOINT_ENV, TOKEN_ENV};
pub use mock::{report_label, MockBackend, MockMode};
pub use parse::{parse_reply, LlmReply};
pub use prompt::{build_prompt, prompt_reports, PromptContext, PromptMode, JSON_INSTRUCTION, PREAMBLE};

use crate::descriptors::TierMResult;
use crate::error::{Error, Result};
use crate::retrieval::{Neighbor, RetrievalIndex};
use crate::similarity::{argmax, ScoreVector};
use crate::store::{sha256_hex, EmbeddingVector};
use crate::tier_l::LabelSet;

/// Added to the parsed class on top of the neighbor vote mass (at most 1),
/// so the LLM decision is always the argmax.
pub const DECISION_BONUS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierHConfig {
    pub depth: usize,
    pub budget: u32,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub prompt_mode: PromptMode,
    pub retry: RetryPolicy,
}

impl Default for TierHConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            budget: 1,
            temperature: 0.0,
            max_output_tokens: 256,
            prompt_mode: PromptMode::Full,
            retry: RetryPolicy::default(),
        }
    }
}

/// One backend call, for the transcript log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub prompt_sha256: String,
    pub raw_text: Option<String>,
    pub parsed_result: Option<String>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierHResult {
    pub neighbors: Vec<Neighbor>,
    pub reply: LlmReply,
    pub prediction: usize,
    pub score_vector: ScoreVector,
    pub fallback_used: bool,
    #[serde(skip)]
    pub calls: Vec<CallRecord>,
}

/// Inputs that Tier-H borrows from the earlier tiers.
#[derive(Debug, Clone, Copy)]
pub struct TierHEvidence<'a> {
    pub descriptor_summary: &'a str,
    pub tier_l_scores: Option<&'a ScoreVector>,
    pub fallback: Option<&'a TierMResult>,
}

/// Similarity-weighted label vote over neighbors. Negative similarities get
/// zero weight; unlabeled neighbors are ignored.
pub fn neighbor_votes(neighbors: &[Neighbor], index: &RetrievalIndex, labels: &LabelSet) -> Vec<f64> {
    let mut votes = vec![0.0; labels.len()];
    let mut total = 0.0;
    for n in neighbors {
        let class = index
            .entry(&n.entry_id)
            .and_then(|e| e.label.as_deref())
            .and_then(|l| labels.index_of(l));
        if let Some(c) = class {
            let w = n.similarity.max(0.0);
            votes[c] += w;
            total += w;
        }
    }
    if total > 0.0 {
        for v in &mut votes {
            *v /= total;
        }
    }
    votes
}

pub fn tier_h_classify(
    a: &EmbeddingVector,
    labels: &LabelSet,
    index: &RetrievalIndex,
    evidence: TierHEvidence<'_>,
    cfg: &TierHConfig,
    backend: &dyn LlmBackend,
) -> Result<TierHResult> {
    if cfg.depth == 0 {
        return Err(Error::Config("retrieval depth must be at least 1".into()));
    }
    if cfg.budget == 0 {
        return Err(Error::Config("LLM call budget must be at least 1".into()));
    }
    let neighbors = index.query_topk(a, cfg.depth)?;
    let reports = neighbors
        .iter()
        .map(|n| index.entry(&n.entry_id).map(|e| e.report.clone()))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Config("neighbor missing from index".into()))?;
    let ctx = PromptContext {
        reports,
        class_names: labels.class_names.clone(),
        descriptor_summary: evidence.descriptor_summary.to_string(),
        tier_l_scores: evidence.tier_l_scores.cloned(),
        mode: cfg.prompt_mode,
    };
    let prompt = build_prompt(&ctx)?;
    let prompt_sha256 = sha256_hex(prompt.as_bytes());
    let req = LlmRequest {
        prompt,
        temperature: cfg.temperature,
        max_output_tokens: cfg.max_output_tokens,
    };

    let mut calls = Vec::with_capacity(cfg.budget as usize);
    let mut replies = Vec::with_capacity(cfg.budget as usize);
    let mut backend_error = None;
    for _ in 0..cfg.budget {
        let started = Instant::now();
        let outcome = call_backend(&req, backend, &cfg.retry);
        let latency_ms = started.elapsed().as_secs_f64() * 1e3;
        match outcome {
            Ok(raw) => {
                let reply = parse_reply(&raw, &labels.class_names);
                calls.push(CallRecord {
                    prompt_sha256: prompt_sha256.clone(),
                    raw_text: Some(raw),
                    parsed_result: reply.parsed_result.clone(),
                    latency_ms,
                });
                replies.push(reply);
            }
            Err(e) => {
                calls.push(CallRecord {
                    prompt_sha256: prompt_sha256.clone(),
                    raw_text: None,
                    parsed_result: None,
                    latency_ms,
                });
                backend_error = Some(e);
            }
        }
    }

    let decided = majority_class(&replies, labels, evidence.tier_l_scores);
    match decided {
        Some((class, reply_idx)) => {
            let mut scores = neighbor_votes(&neighbors, index, labels);
            scores[class] += DECISION_BONUS;
            Ok(TierHResult {
                neighbors,
                reply: replies.swap_remove(reply_idx),
                prediction: class,
                score_vector: ScoreVector::new(labels.task_id.clone(), scores),
                fallback_used: false,
                calls,
            })
        }
        None => {
            let fallback = match (evidence.fallback, backend_error) {
                (Some(f), _) => f,
                (None, Some(e)) => return Err(e),
                (None, None) => {
                    // unparseable and nothing to fall back on: neighbor votes alone
                    let scores = neighbor_votes(&neighbors, index, labels);
                    return Ok(TierHResult {
                        neighbors,
                        reply: replies.pop().unwrap_or_else(|| parse_reply("", &[])),
                        prediction: argmax(&scores),
                        score_vector: ScoreVector::new(labels.task_id.clone(), scores),
                        fallback_used: true,
                        calls,
                    });
                }
            };
            let reply = replies.pop().unwrap_or_else(|| parse_reply("", &[]));
            Ok(TierHResult {
                neighbors,
                reply,
                prediction: fallback.prediction,
                score_vector: fallback.rule_scores.clone(),
                fallback_used: true,
                calls,
            })
        }
    }
}

/// Most frequent parsed class; ties go to the higher Tier-L score, then the
/// lower class index. Returns the class and the first reply that named it.
fn majority_class(
    replies: &[LlmReply],
    labels: &LabelSet,
    tier_l: Option<&ScoreVector>,
) -> Option<(usize, usize)> {
    let mut counts = vec![0usize; labels.len()];
    for r in replies {
        if let Some(c) = r.parsed_result.as_deref().and_then(|n| labels.index_of(n)) {
            counts[c] += 1;
        }
    }
    let tl = |c: usize| tier_l.and_then(|s| s.scores.get(c).copied()).unwrap_or(0.0);
    let best = (0..labels.len())
        .filter(|&c| counts[c] > 0)
        .reduce(|b, c| {
            if counts[c] > counts[b] || (counts[c] == counts[b] && tl(c) > tl(b)) {
                c
            } else {
                b
            }
        })?;
    let name = &labels.class_names[best];
    let idx = replies
        .iter()
        .position(|r| r.parsed_result.as_deref() == Some(name.as_str()))?;
    Some((best, idx))
}

/// Backend selection string: `mock:<mode>` or `http`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BackendSpec {
    Mock(MockMode),
    Http,
}

impl FromStr for BackendSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "http" {
            return Ok(BackendSpec::Http);
        }
        match s.strip_prefix("mock:") {
            Some(mode) => Ok(BackendSpec::Mock(mode.parse()?)),
            None => Err(Error::Config(format!(
                "backend must be mock:<mode> or http, got {s:?}"
            ))),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Http => f.write_str("http"),
            BackendSpec::Mock(MockMode::Majority) => f.write_str("mock:majority"),
            BackendSpec::Mock(MockMode::Garbage) => f.write_str("mock:garbage"),
            BackendSpec::Mock(MockMode::EchoFirst) => f.write_str("mock:echo_first"),
            BackendSpec::Mock(MockMode::Fixed(c)) => write!(f, "mock:fixed:{c}"),
        }
    }
}

impl TryFrom<String> for BackendSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BackendSpec> for String {
    fn from(b: BackendSpec) -> String {
        b.to_string()
    }
}

impl BackendSpec {
    /// Instantiates the backend. HTTP needs an endpoint from config or
    /// `TRIAGE_LLM_ENDPOINT`.
    pub fn build(&self, http: Option<&HttpBackendConfig>) -> Result<Arc<dyn LlmBackend>> {
        match self {
            BackendSpec::Mock(mode) => Ok(Arc::new(MockBackend::new(mode.clone()))),
            BackendSpec::Http => {
                let config = match http {
                    Some(c) => c.clone(),
                    None => HttpBackendConfig {
                        endpoint: std::env::var(ENDPOINT_ENV).map_err(|_| {
                            Error::Config(format!("http backend needs an endpoint or {ENDPOINT_ENV}"))
                        })?,
                        model: None,
                        timeout_ms: 60_000,
                    },
                };
                Ok(Arc::new(HttpBackend::from_env(config)?))
            }
        }
    }
}
