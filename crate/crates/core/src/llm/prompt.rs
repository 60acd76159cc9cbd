//! Tier-H prompt layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::ScoreVector;

pub const PREAMBLE: &str = "You are a highly experienced cardiopulmonary doctor. Given the following reports, \
select the most likely/probable diagnosis from the given classes below and write very few words justification.";

pub const JSON_INSTRUCTION: &str = "Your output should be JSON of the following structure:\n\
{\"result\": ..., \"justification\": ...}. Do not provide any other explanation.";

pub const REPORTS_HEADER: &str = "Reports:";

/// What evidence goes into the prompt besides the retrieved reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    /// Reports plus the descriptor profile and Tier-L scores.
    #[default]
    Full,
    /// Reports and classes only.
    ReportsOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    pub reports: Vec<String>,
    pub class_names: Vec<String>,
    pub descriptor_summary: String,
    pub tier_l_scores: Option<ScoreVector>,
    pub mode: PromptMode,
}

impl PromptContext {
    pub fn reports_only(reports: Vec<String>, class_names: Vec<String>) -> Self {
        Self {
            reports,
            class_names,
            descriptor_summary: String::new(),
            tier_l_scores: None,
            mode: PromptMode::ReportsOnly,
        }
    }
}

pub fn build_prompt(ctx: &PromptContext) -> Result<String> {
    if ctx.reports.is_empty() {
        return Err(Error::EmptyReports);
    }
    let mut out = String::new();
    out.push_str(PREAMBLE);
    out.push_str("\n\n");
    out.push_str(REPORTS_HEADER);
    out.push('\n');
    for report in &ctx.reports {
        out.push_str("- ");
        // one bullet per line
        out.push_str(&report.replace(['\r', '\n'], " "));
        out.push('\n');
    }
    out.push('\n');

    if ctx.mode == PromptMode::Full {
        let summary = ctx.descriptor_summary.trim_end();
        if !summary.is_empty() {
            out.push_str("Descriptor profile:\n");
            out.push_str(summary);
            out.push_str("\n\n");
        }
        if let Some(scores) = &ctx.tier_l_scores {
            let parts: Vec<String> = ctx
                .class_names
                .iter()
                .zip(&scores.scores)
                .map(|(c, s)| format!("{c}={s:.4}"))
                .collect();
            out.push_str("Label similarity scores: ");
            out.push_str(&parts.join(", "));
            out.push_str("\n\n");
        }
    }

    out.push_str("Classes: ");
    out.push_str(&ctx.class_names.join(", "));
    out.push_str("\n\n");
    out.push_str(JSON_INSTRUCTION);
    out.push('\n');
    Ok(out)
}

/// Bullet texts of the reports block, in order.
pub fn prompt_reports(prompt: &str) -> Vec<&str> {
    let mut lines = prompt.lines().skip_while(|l| l.trim_end() != REPORTS_HEADER);
    lines.next();
    lines.map_while(|l| l.strip_prefix("- ")).collect()
}
