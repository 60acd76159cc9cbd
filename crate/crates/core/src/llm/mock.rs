//! Deterministic LLM stand-in.
//!
//! The mock reads the bullet lines of the prompt's reports block and looks for
//! `label=<class>` tokens. It never looks at anything else, so its answers
//! depend only on which reports were retrieved.

use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use super::backend::{LlmBackend, LlmRequest, TransportError};
use super::prompt::prompt_reports;
use crate::error::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockMode {
    /// Most frequent report label; ties go to the label seen first.
    Majority,
    Fixed(String),
    /// Replies with text that holds no JSON.
    Garbage,
    /// Label of the top-ranked report.
    EchoFirst,
}

impl FromStr for MockMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "majority" => Ok(MockMode::Majority),
            "garbage" => Ok(MockMode::Garbage),
            "echo_first" => Ok(MockMode::EchoFirst),
            _ => match s.strip_prefix("fixed:") {
                Some(class) if !class.is_empty() => Ok(MockMode::Fixed(class.to_string())),
                _ => Err(Error::Config(format!("unknown mock mode {s:?}"))),
            },
        }
    }
}

#[derive(Debug)]
pub struct MockBackend {
    mode: MockMode,
    calls: AtomicU64,
}

/// Value of the first `label=` token in `report`.
pub fn report_label(report: &str) -> Option<&str> {
    let start = report.find("label=")? + "label=".len();
    let rest = &report[start..];
    let end = rest
        .find(|c: char| c == ';' || c == ',' || c.is_whitespace())
        .unwrap_or(rest.len());
    let label = &rest[..end];
    (!label.is_empty()).then_some(label)
}

fn reply(result: &str, justification: &str) -> String {
    format!(
        "{{\"result\":{},\"justification\":{}}}",
        serde_json::Value::from(result),
        serde_json::Value::from(justification)
    )
}

impl MockBackend {
    pub fn new(mode: MockMode) -> Self {
        Self {
            mode,
            calls: AtomicU64::new(0),
        }
    }

    pub fn mode(&self) -> &MockMode {
        &self.mode
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn answer(&self, prompt: &str) -> String {
        let labels: Vec<&str> = prompt_reports(prompt).into_iter().filter_map(report_label).collect();
        match &self.mode {
            MockMode::Garbage => "I am not sure, it could be anything.".to_string(),
            MockMode::Fixed(class) => reply(class, "fixed"),
            MockMode::EchoFirst => match labels.first() {
                Some(l) => reply(l, "first report"),
                None => reply("", "no labeled reports"),
            },
            MockMode::Majority => {
                let mut counts: Vec<(&str, usize)> = Vec::new();
                for l in &labels {
                    match counts.iter_mut().find(|(c, _)| c == l) {
                        Some((_, n)) => *n += 1,
                        None => counts.push((l, 1)),
                    }
                }
                // max_by_key keeps the last maximum, so scan in reverse
                match counts.iter().rev().max_by_key(|(_, n)| *n) {
                    Some((l, _)) => reply(l, "majority"),
                    None => reply("", "no labeled reports"),
                }
            }
        }
    }
}

impl LlmBackend for MockBackend {
    fn name(&self) -> String {
        match &self.mode {
            MockMode::Majority => "mock:majority".into(),
            MockMode::Fixed(c) => format!("mock:fixed:{c}"),
            MockMode::Garbage => "mock:garbage".into(),
            MockMode::EchoFirst => "mock:echo_first".into(),
        }
    }

    fn complete(&self, req: &LlmRequest) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(self.answer(&req.prompt))
    }
}
