//! Gated escalation across the three tiers and batch cost accounting.
//!
//! A sample finalizes at Tier-L when its label margin reaches `tau_l`, at
//! Tier-M when the rule-score margin reaches `tau_m`, and at Tier-H otherwise.
//! Tier-L always runs, so its cost is charged to every sample.

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptors::{tier_m_classify, DescriptorTaxonomy, RuleTable, TierMResult};
use crate::error::{Error, Result};
use crate::llm::{tier_h_classify, CallRecord, LlmBackend, TierHConfig, TierHEvidence, TierHResult};
use crate::retrieval::RetrievalIndex;
use crate::store::EmbeddingVector;
use crate::tier_l::{tier_l_classify, LabelSet, TierLResult};

pub const DEFAULT_TAU_L: f64 = 0.20;
pub const DEFAULT_TAU_M: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    L,
    M,
    H,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::L => "L",
            Tier::M => "M",
            Tier::H => "H",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingConfig {
    pub tau_l: f64,
    pub tau_m: f64,
    #[serde(default)]
    pub mask: Option<Vec<bool>>,
    #[serde(flatten)]
    pub tier_h: TierHConfig,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            tau_l: DEFAULT_TAU_L,
            tau_m: DEFAULT_TAU_M,
            mask: None,
            tier_h: TierHConfig::default(),
        }
    }
}

impl RoutingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau_l", self.tau_l), ("tau_m", self.tau_m)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.tier_h.depth == 0 {
            return Err(Error::Config("retrieval depth must be at least 1".into()));
        }
        if self.tier_h.budget == 0 {
            return Err(Error::Config("LLM call budget must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything one task needs to route a sample. Immutable once built.
#[derive(Debug, Clone)]
pub struct TaskAssets {
    pub labels: LabelSet,
    pub taxonomy: DescriptorTaxonomy,
    pub rules: RuleTable,
    pub index: RetrievalIndex,
}

impl TaskAssets {
    pub fn new(
        labels: LabelSet,
        taxonomy: DescriptorTaxonomy,
        rules: RuleTable,
        index: RetrievalIndex,
    ) -> Result<Self> {
        let dim = labels.dimension();
        if taxonomy.dimension() != dim {
            return Err(Error::dims(dim, taxonomy.dimension()));
        }
        if index.dimension() != dim {
            return Err(Error::dims(dim, index.dimension()));
        }
        if rules.class_names != labels.class_names {
            return Err(Error::Config(format!(
                "rule table classes {:?} differ from label set {:?}",
                rules.class_names, labels.class_names
            )));
        }
        Ok(Self {
            labels,
            taxonomy,
            rules,
            index,
        })
    }

    pub fn dimension(&self) -> usize {
        self.labels.dimension()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingOutcome {
    pub sample_id: String,
    pub final_tier: Tier,
    pub prediction: usize,
    pub final_scores: Vec<f64>,
    pub c_l: f64,
    pub c_m: Option<f64>,
    pub tier_l: TierLResult,
    pub tier_m: Option<TierMResult>,
    pub tier_h: Option<TierHResult>,
    /// Wall-clock time spent routing this sample.
    #[serde(skip)]
    pub elapsed_ms: f64,
}

impl RoutingOutcome {
    pub fn escalated_past_l(&self) -> bool {
        self.final_tier != Tier::L
    }

    pub fn calls(&self) -> &[CallRecord] {
        self.tier_h.as_ref().map(|h| h.calls.as_slice()).unwrap_or(&[])
    }
}

pub fn route_one(
    sample_id: &str,
    a: &EmbeddingVector,
    assets: &TaskAssets,
    cfg: &RoutingConfig,
    backend: &dyn LlmBackend,
) -> Result<RoutingOutcome> {
    let started = Instant::now();
    route_inner(a, assets, cfg, backend)
        .map(|(final_tier, tier_l, tier_m, tier_h)| {
            let (prediction, final_scores) = match (&tier_h, &tier_m) {
                (Some(h), _) => (h.prediction, h.score_vector.scores.clone()),
                (None, Some(m)) if final_tier == Tier::M => (m.prediction, m.rule_scores.scores.clone()),
                _ => (tier_l.prediction, tier_l.scores.scores.clone()),
            };
            RoutingOutcome {
                sample_id: sample_id.to_string(),
                final_tier,
                prediction,
                final_scores,
                c_l: tier_l.confidence,
                c_m: tier_m.as_ref().map(|m| m.confidence),
                tier_l,
                tier_m,
                tier_h,
                elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
            }
        })
        .map_err(|e| e.for_sample(sample_id))
}

type TierResults = (Tier, TierLResult, Option<TierMResult>, Option<TierHResult>);

fn route_inner(
    a: &EmbeddingVector,
    assets: &TaskAssets,
    cfg: &RoutingConfig,
    backend: &dyn LlmBackend,
) -> Result<TierResults> {
    let tier_l = tier_l_classify(a, &assets.labels)?;
    if tier_l.confidence >= cfg.tau_l {
        return Ok((Tier::L, tier_l, None, None));
    }

    let unmasked;
    let mask = match &cfg.mask {
        Some(m) => m.as_slice(),
        None => {
            unmasked = vec![false; assets.taxonomy.len()];
            &unmasked
        }
    };
    let tier_m = tier_m_classify(a, &assets.taxonomy, &assets.rules, mask)?;
    if tier_m.confidence >= cfg.tau_m {
        return Ok((Tier::M, tier_l, Some(tier_m), None));
    }

    let summary = tier_m.profile.summary(&assets.taxonomy);
    let evidence = TierHEvidence {
        descriptor_summary: &summary,
        tier_l_scores: Some(&tier_l.scores),
        fallback: Some(&tier_m),
    };
    let tier_h = tier_h_classify(a, &assets.labels, &assets.index, evidence, &cfg.tier_h, backend)?;
    Ok((Tier::H, tier_l, Some(tier_m), Some(tier_h)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub t_l: f64,
    pub t_m: f64,
    pub t_h: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            t_l: 1.0,
            t_m: 4.0,
            t_h: 40.0,
        }
    }
}

impl CostModel {
    /// Problems worth warning about. Costs outside `T_H >= T_M >= T_L` still work.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [("t_l", self.t_l), ("t_m", self.t_m), ("t_h", self.t_h)] {
            if v.is_nan() || v < 0.0 {
                out.push(format!("{name} = {v} is not a nonnegative cost"));
            }
        }
        if !(self.t_h >= self.t_m && self.t_m >= self.t_l) {
            out.push(format!(
                "expected T_H >= T_M >= T_L, got ({}, {}, {})",
                self.t_l, self.t_m, self.t_h
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub n: usize,
    pub count_l: usize,
    pub count_m: usize,
    pub count_h: usize,
    pub frac_l: f64,
    pub frac_m: f64,
    pub frac_h: f64,
    pub alpha_m: f64,
    pub alpha_h: f64,
    pub expected_cost: f64,
}

impl BatchStats {
    pub fn from_counts(count_l: usize, count_m: usize, count_h: usize, model: &CostModel) -> Self {
        let n = count_l + count_m + count_h;
        let frac = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
        let mut stats = Self {
            n,
            count_l,
            count_m,
            count_h,
            frac_l: frac(count_l),
            frac_m: frac(count_m),
            frac_h: frac(count_h),
            alpha_m: frac(count_m + count_h),
            alpha_h: frac(count_h),
            expected_cost: 0.0,
        };
        stats.expected_cost = expected_cost(&stats, model);
        stats
    }

    pub fn from_tiers<I: IntoIterator<Item = Tier>>(tiers: I, model: &CostModel) -> Self {
        let (mut l, mut m, mut h) = (0, 0, 0);
        for t in tiers {
            match t {
                Tier::L => l += 1,
                Tier::M => m += 1,
                Tier::H => h += 1,
            }
        }
        Self::from_counts(l, m, h, model)
    }
}

pub fn expected_cost(stats: &BatchStats, model: &CostModel) -> f64 {
    model.t_l + stats.alpha_m * model.t_m + stats.alpha_h * model.t_h
}

#[derive(Debug)]
pub struct BatchResult {
    /// Successful outcomes in input order.
    pub outcomes: Vec<RoutingOutcome>,
    /// Failed samples, in input order.
    pub errors: Vec<Error>,
    pub stats: BatchStats,
}

/// Routes every sample, at most `parallelism` at a time. Results do not
/// depend on `parallelism`.
pub fn route_batch(
    samples: &[(String, EmbeddingVector)],
    assets: &TaskAssets,
    cfg: &RoutingConfig,
    model: &CostModel,
    backend: &dyn LlmBackend,
    parallelism: usize,
) -> Result<BatchResult> {
    if samples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    cfg.validate()?;
    let run = |(id, a): &(String, EmbeddingVector)| route_one(id, a, assets, cfg, backend);
    let results: Vec<Result<RoutingOutcome>> = if parallelism <= 1 {
        samples.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| samples.par_iter().map(run).collect())
    };

    let mut outcomes = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                log::warn!("{e}");
                errors.push(e);
            }
        }
    }
    if outcomes.is_empty() {
        return Err(errors.into_iter().next().unwrap_or(Error::EmptyCorpus));
    }
    let stats = BatchStats::from_tiers(outcomes.iter().map(|o| o.final_tier), model);
    Ok(BatchResult {
        outcomes,
        errors,
        stats,
    })
}
