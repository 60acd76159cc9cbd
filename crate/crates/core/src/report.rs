//! Aligned-text and CSV renderings of evaluation and ablation tables.

use std::fmt::Write as _;

use serde::Serialize;

use crate::ablation::{DepthRow, MaskRow, TauRow};
use crate::artifacts::EvalReport;
use crate::error::{Error, Result};
use crate::eval::{SweepResult, TierStratifiedReport};
use crate::router::Tier;

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

fn bucket_name(t: Tier) -> &'static str {
    match t {
        Tier::L => "L-finalized",
        Tier::M => "M-finalized",
        Tier::H => "H-escalated",
    }
}

pub fn stratified_text(r: &TierStratifiedReport) -> String {
    let mut out = format!("{:<12} {:>6} {:>7} {:>9} {:>9} {:>8}\n", "bucket", "n", "share", "TL AUROC", "Adaptive", "Rel.");
    for row in &r.rows {
        let _ = writeln!(
            out,
            "{:<12} {:>6} {:>6.1}% {:>9} {:>9} {:>8}",
            bucket_name(row.tier),
            row.count,
            100.0 * row.share,
            opt(row.tier_l_auroc, 4),
            opt(row.adaptive_auroc, 4),
            row.relative_gain.map_or_else(|| "-".to_string(), |g| format!("{:+.1}%", 100.0 * g)),
        );
    }
    out
}

pub fn eval_text(r: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "task {}  n={}  averaging: {}", r.task_id, r.n, r.averaging);
    let _ = writeln!(out, "adaptive AUROC {:.4}  tier-L AUROC {:.4}", r.auroc, r.tier_l_auroc);
    if let Some(per_class) = &r.per_class_auroc {
        let cells: Vec<String> = per_class.iter().map(|v| opt(*v, 4)).collect();
        let _ = writeln!(out, "per-class AUROC [{}]", cells.join(", "));
    }
    let s = &r.stats;
    let _ = writeln!(
        out,
        "tau_L {} tau_M {}  %L {:.1} %M {:.1} %H {:.1}  expected cost {:.4}",
        r.config.tau_l,
        r.config.tau_m,
        100.0 * s.frac_l,
        100.0 * s.frac_m,
        100.0 * s.frac_h,
        s.expected_cost
    );
    out.push('\n');
    out.push_str(&stratified_text(&r.stratified));
    out
}

pub fn mask_text(rows: &[MaskRow]) -> String {
    let mut out = format!("{:>6} {:>7} {:>9} {:>8}\n", "rate", "masked", "mean", "sd");
    for r in rows {
        let _ = writeln!(out, "{:>6} {:>7} {:>9.4} {:>8.4}", r.rate, r.masked_groups, r.mean, r.sd);
    }
    out
}

pub fn depth_text(rows: &[DepthRow]) -> String {
    let mut out = format!("{:>6} {:>9} {:>10}\n", "depth", "AUROC", "fallbacks");
    for r in rows {
        let _ = writeln!(out, "{:>6} {:>9.4} {:>10}", r.depth, r.auroc, r.fallbacks);
    }
    out
}

pub fn tau_text(rows: &[TauRow]) -> String {
    let mut out = format!(
        "{:>7} {:>7} {:>9} {:>7} {:>7} {:>7} {:>9}\n",
        "tau_L", "tau_M", "AUROC", "%T-L", "%T-M", "%T-H", "cost"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:>7} {:>7} {:>9} {:>7.1} {:>7.1} {:>7.1} {:>9.4}",
            r.tau_l,
            r.tau_m,
            opt(r.auroc, 4),
            r.pct_l,
            r.pct_m,
            r.pct_h,
            r.expected_cost
        );
    }
    out
}

pub fn sweep_text(s: &SweepResult) -> String {
    let mut out = format!("{:>7} {:>9} {:>10} {:>9}\n", "tau_M", "AUROC", "finalized", "frac");
    for p in &s.points {
        let mark = if p.tau == s.selected { "  <- selected" } else { "" };
        let _ = writeln!(
            out,
            "{:>7} {:>9} {:>10} {:>9.4}{mark}",
            p.tau,
            opt(p.metric, 4),
            p.finalized,
            p.finalized_frac
        );
    }
    out
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(format!("csv: {e}")))
}

pub fn stratified_csv(r: &TierStratifiedReport) -> Result<String> {
    #[derive(Serialize)]
    struct Row {
        bucket: &'static str,
        count: usize,
        share_pct: f64,
        tier_l_auroc: Option<f64>,
        adaptive_auroc: Option<f64>,
        relative_gain_pct: Option<f64>,
    }
    to_csv(r.rows.iter().map(|b| Row {
        bucket: bucket_name(b.tier),
        count: b.count,
        share_pct: 100.0 * b.share,
        tier_l_auroc: b.tier_l_auroc,
        adaptive_auroc: b.adaptive_auroc,
        relative_gain_pct: b.relative_gain.map(|g| 100.0 * g),
    }))
}

pub fn mask_csv(rows: &[MaskRow]) -> Result<String> {
    #[derive(Serialize)]
    struct Row {
        rate: f64,
        masked_groups: usize,
        runs: usize,
        mean: f64,
        sd: f64,
    }
    to_csv(rows.iter().map(|r| Row {
        rate: r.rate,
        masked_groups: r.masked_groups,
        runs: r.aurocs.len(),
        mean: r.mean,
        sd: r.sd,
    }))
}

pub fn depth_csv(rows: &[DepthRow]) -> Result<String> {
    to_csv(rows)
}

pub fn tau_csv(rows: &[TauRow]) -> Result<String> {
    to_csv(rows)
}

pub fn sweep_csv(s: &SweepResult) -> Result<String> {
    #[derive(Serialize)]
    struct Row {
        tau_m: f64,
        auroc: Option<f64>,
        finalized: usize,
        finalized_frac: f64,
        selected: bool,
    }
    to_csv(s.points.iter().map(|p| Row {
        tau_m: p.tau,
        auroc: p.metric,
        finalized: p.finalized,
        finalized_frac: p.finalized_frac,
        selected: p.tau == s.selected,
    }))
}
