//! Run artifacts: outcome JSONL with a trailing summary line, the LLM
//! transcript sidecar, and evaluation reports built from them.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{adaptive_scores, auroc_macro_ovr, averaging_name, task_auroc, tier_stratified, TierStratifiedReport};
use crate::router::{BatchResult, BatchStats, CostModel, RoutingConfig, RoutingOutcome};
use crate::tier_l::LabelSet;

pub const OUTCOMES_FILE: &str = "outcomes.jsonl";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const RUN_LOG_FILE: &str = "run.log";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    #[serde(flatten)]
    pub outcome: RoutingOutcome,
    pub prediction_label: String,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub sample_id: Option<String>,
    pub kind: String,
    pub message: String,
}

impl From<&Error> for SampleError {
    fn from(e: &Error) -> Self {
        Self {
            sample_id: match e {
                Error::Sample { sample_id, .. } => Some(sample_id.clone()),
                _ => None,
            },
            kind: e.kind().to_string(),
            message: e.root().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub task_id: String,
    pub class_names: Vec<String>,
    pub stats: BatchStats,
    pub cost_model: CostModel,
    pub config: RoutingConfig,
    pub backend: String,
    pub errors: Vec<SampleError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub rows: Vec<OutcomeRow>,
    pub summary: RunSummary,
}

#[derive(Serialize, Deserialize)]
struct SummaryLine {
    summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRow {
    pub sample_id: String,
    pub prompt_sha256: String,
    pub raw_text: Option<String>,
    pub parsed_result: Option<String>,
    pub latency_ms: f64,
}

impl RunArtifacts {
    /// Pairs batch outcomes with class names and optional ground truth.
    pub fn from_batch(
        batch: &BatchResult,
        labels: &LabelSet,
        truth: impl Fn(&str) -> Option<String>,
        config: &RoutingConfig,
        cost_model: &CostModel,
        backend: &str,
    ) -> Self {
        let rows = batch
            .outcomes
            .iter()
            .map(|o| OutcomeRow {
                prediction_label: labels.class_names[o.prediction].clone(),
                label: truth(&o.sample_id),
                outcome: o.clone(),
            })
            .collect();
        Self {
            rows,
            summary: RunSummary {
                task_id: labels.task_id.clone(),
                class_names: labels.class_names.clone(),
                stats: batch.stats,
                cost_model: *cost_model,
                config: config.clone(),
                backend: backend.to_string(),
                errors: batch.errors.iter().map(SampleError::from).collect(),
            },
        }
    }

    pub fn transcript(&self) -> Vec<TranscriptRow> {
        self.rows
            .iter()
            .flat_map(|r| {
                r.outcome.calls().iter().map(|c| TranscriptRow {
                    sample_id: r.outcome.sample_id.clone(),
                    prompt_sha256: c.prompt_sha256.clone(),
                    raw_text: c.raw_text.clone(),
                    parsed_result: c.parsed_result.clone(),
                    latency_ms: c.latency_ms,
                })
            })
            .collect()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut lines: Vec<String> = Vec::with_capacity(self.rows.len() + 1);
        for row in &self.rows {
            lines.push(to_line(row, path.as_ref())?);
        }
        lines.push(to_line(&SummaryLine { summary: self.summary.clone() }, path.as_ref())?);
        write_lines(path.as_ref(), &lines)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        let mut summary = None;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            if summary.is_some() {
                return Err(Error::Config(format!("{}: rows after the summary line", path.display())));
            }
            let ctx = || format!("{} line {}", path.display(), i + 1);
            let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::json(ctx(), e))?;
            if value.get("summary").is_some() {
                let s: SummaryLine = serde_json::from_value(value).map_err(|e| Error::json(ctx(), e))?;
                summary = Some(s.summary);
            } else {
                rows.push(serde_json::from_value(value).map_err(|e| Error::json(ctx(), e))?);
            }
        }
        let summary = summary.ok_or_else(|| Error::Config(format!("{}: missing summary line", path.display())))?;
        Ok(Self { rows, summary })
    }
}

pub fn write_transcript(path: impl AsRef<Path>, rows: &[TranscriptRow]) -> Result<()> {
    let lines = rows.iter().map(|r| to_line(r, path.as_ref())).collect::<Result<Vec<_>>>()?;
    write_lines(path.as_ref(), &lines)
}

pub fn read_transcript(path: impl AsRef<Path>) -> Result<Vec<TranscriptRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path.display().to_string(), e)))
        .collect()
}

fn to_line<T: Serialize>(value: &T, path: &Path) -> Result<String> {
    serde_json::to_string(value).map_err(|e| Error::json(path.display().to_string(), e))
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task_id: String,
    pub n: usize,
    pub averaging: String,
    /// Adaptive AUROC over rank-pooled scores.
    pub auroc: f64,
    /// Per-class one-vs-rest AUROC, multiclass tasks only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class_auroc: Option<Vec<Option<f64>>>,
    pub tier_l_auroc: f64,
    pub stratified: TierStratifiedReport,
    pub stats: BatchStats,
    pub cost_model: CostModel,
    pub config: RoutingConfig,
}

/// Evaluates the labeled rows of a run.
pub fn evaluate_run(run: &RunArtifacts) -> Result<EvalReport> {
    let classes = &run.summary.class_names;
    let mut outcomes = Vec::new();
    let mut labels = Vec::new();
    for row in &run.rows {
        let Some(label) = &row.label else { continue };
        let y = classes.iter().position(|c| c == label).ok_or_else(|| Error::UnknownLabel {
            record: row.outcome.sample_id.clone(),
            label: label.clone(),
        })?;
        outcomes.push(row.outcome.clone());
        labels.push(y);
    }
    if outcomes.is_empty() {
        return Err(Error::Config("run has no labeled outcomes to evaluate".into()));
    }
    let c = classes.len();
    let pooled = adaptive_scores(&outcomes);
    let tier_l: Vec<Vec<f64>> = outcomes.iter().map(|o| o.tier_l.scores.scores.clone()).collect();
    let per_class_auroc = if c > 2 { Some(auroc_macro_ovr(&pooled, &labels, c)?.per_class) } else { None };
    Ok(EvalReport {
        task_id: run.summary.task_id.clone(),
        n: outcomes.len(),
        averaging: averaging_name(c).to_string(),
        auroc: task_auroc(&pooled, &labels, c)?,
        per_class_auroc,
        tier_l_auroc: task_auroc(&tier_l, &labels, c)?,
        stratified: tier_stratified(&outcomes, &labels, c)?,
        stats: run.summary.stats,
        cost_model: run.summary.cost_model,
        config: run.summary.config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockBackend, MockMode};
    use crate::router::route_batch;
    use crate::store::Split;
    use crate::world::{generate_world, WorldConfig};

    #[test]
    fn run_file_round_trips() {
        let world = generate_world(&WorldConfig { corpus_size: 60, test_size: 40, valid_size: 10, ..WorldConfig::default() })
            .unwrap();
        let assets = world.task_assets().unwrap();
        let samples = world.samples(Split::Test);
        let cfg = RoutingConfig { tau_l: 0.5, tau_m: 0.4, ..RoutingConfig::default() };
        let model = CostModel::default();
        let backend = MockBackend::new(MockMode::Majority);
        let batch = route_batch(&samples, &assets, &cfg, &model, &backend, 1).unwrap();
        let truth = |id: &str| world.records.iter().find(|r| r.id == id).and_then(|r| r.label.clone());
        let run = RunArtifacts::from_batch(&batch, &assets.labels, truth, &cfg, &model, "mock:majority");
        assert!(!run.transcript().is_empty());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(OUTCOMES_FILE);
        run.write(&path).unwrap();
        let back = RunArtifacts::read(&path).unwrap();
        assert_eq!(back.summary, run.summary);
        // call records are transcript-only
        let strip = |r: &OutcomeRow| {
            let mut o = r.outcome.clone();
            o.elapsed_ms = 0.0;
            if let Some(h) = o.tier_h.as_mut() {
                h.calls.clear();
            }
            o
        };
        assert!(back.rows.iter().zip(&run.rows).all(|(a, b)| strip(a) == strip(b)));

        let report = evaluate_run(&back).unwrap();
        assert_eq!(report.n, 40);
        assert_eq!(report.stratified.row(crate::router::Tier::L).share, back.summary.stats.frac_l);

        let tpath = dir.path().join(TRANSCRIPT_FILE);
        write_transcript(&tpath, &run.transcript()).unwrap();
        assert_eq!(read_transcript(&tpath).unwrap(), run.transcript());
    }
}
