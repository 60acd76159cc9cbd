//! Masking, retrieval-depth and Tier-L threshold ablations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptors::{mask_count, sample_mask, tier_m_classify};
use crate::error::{Error, Result};
use crate::eval::{adaptive_scores, mean_sd, task_auroc};
use crate::llm::{tier_h_classify, LlmBackend, TierHConfig, TierHEvidence};
use crate::router::{route_batch, CostModel, RoutingConfig, TaskAssets};
use crate::store::EmbeddingVector;
use crate::tier_l::tier_l_classify;

/// A labeled evaluation set for one task.
#[derive(Debug, Clone, Copy)]
pub struct Cohort<'a> {
    pub assets: &'a TaskAssets,
    pub samples: &'a [(String, EmbeddingVector)],
    pub labels: &'a [usize],
}

impl Cohort<'_> {
    fn check(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if self.samples.len() != self.labels.len() {
            return Err(Error::RecordCountMismatch {
                declared: self.samples.len(),
                found: self.labels.len(),
                what: "labels".into(),
            });
        }
        Ok(())
    }

    fn classes(&self) -> usize {
        self.assets.labels.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRow {
    pub rate: f64,
    pub masked_groups: usize,
    pub seeds: Vec<u64>,
    pub aurocs: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

/// Tier-M-only AUROC under seeded random group masks.
pub fn ablate_masking(cohort: Cohort<'_>, rates: &[f64], seeds: &[u64]) -> Result<Vec<MaskRow>> {
    cohort.check()?;
    if seeds.is_empty() {
        return Err(Error::Config("masking ablation needs at least one seed".into()));
    }
    let taxonomy = &cohort.assets.taxonomy;
    rates
        .iter()
        .map(|&rate| {
            let aurocs = seeds
                .iter()
                .map(|&seed| {
                    let mask = sample_mask(taxonomy, rate, seed)?;
                    let scores = cohort
                        .samples
                        .par_iter()
                        .map(|(id, a)| {
                            tier_m_classify(a, taxonomy, &cohort.assets.rules, &mask)
                                .map(|m| m.rule_scores.scores)
                                .map_err(|e| e.for_sample(id))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    task_auroc(&scores, cohort.labels, cohort.classes())
                })
                .collect::<Result<Vec<_>>>()?;
            let (mean, sd) = mean_sd(&aurocs);
            Ok(MaskRow {
                rate,
                masked_groups: mask_count(taxonomy.len(), rate),
                seeds: seeds.to_vec(),
                aurocs,
                mean,
                sd,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub depth: usize,
    pub auroc: f64,
    pub fallbacks: usize,
}

/// Tier-H-only AUROC per retrieval depth with a single LLM call.
pub fn ablate_depth(
    cohort: Cohort<'_>,
    depths: &[usize],
    base: &TierHConfig,
    mask: Option<&[bool]>,
    backend: &dyn LlmBackend,
) -> Result<Vec<DepthRow>> {
    cohort.check()?;
    let assets = cohort.assets;
    let unmasked = vec![false; assets.taxonomy.len()];
    let mask = mask.unwrap_or(&unmasked);
    // Tier-L and Tier-M evidence does not depend on depth.
    let evidence = cohort
        .samples
        .par_iter()
        .map(|(id, a)| {
            let l = tier_l_classify(a, &assets.labels).map_err(|e| e.for_sample(id))?;
            let m = tier_m_classify(a, &assets.taxonomy, &assets.rules, mask).map_err(|e| e.for_sample(id))?;
            let summary = m.profile.summary(&assets.taxonomy);
            Ok((l, m, summary))
        })
        .collect::<Result<Vec<_>>>()?;

    depths
        .iter()
        .map(|&depth| {
            if depth == 0 {
                return Err(Error::Config("retrieval depth must be at least 1".into()));
            }
            let cfg = TierHConfig { depth, budget: 1, ..base.clone() };
            let results = cohort
                .samples
                .par_iter()
                .zip(&evidence)
                .map(|((id, a), (l, m, summary))| {
                    let ev = TierHEvidence {
                        descriptor_summary: summary,
                        tier_l_scores: Some(&l.scores),
                        fallback: Some(m),
                    };
                    tier_h_classify(a, &assets.labels, &assets.index, ev, &cfg, backend)
                        .map_err(|e| e.for_sample(id))
                })
                .collect::<Result<Vec<_>>>()?;
            let fallbacks = results.iter().filter(|h| h.fallback_used).count();
            let scores: Vec<Vec<f64>> = results.into_iter().map(|h| h.score_vector.scores).collect();
            Ok(DepthRow {
                depth,
                auroc: task_auroc(&scores, cohort.labels, cohort.classes())?,
                fallbacks,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauRow {
    pub tau_l: f64,
    pub tau_m: f64,
    pub auroc: Option<f64>,
    pub pct_l: f64,
    pub pct_m: f64,
    pub pct_h: f64,
    pub expected_cost: f64,
}

/// Full adaptive runs, one per `tau_l`, with everything else from `base`.
pub fn sweep_tau_l(
    cohort: Cohort<'_>,
    taus: &[f64],
    base: &RoutingConfig,
    model: &CostModel,
    backend: &dyn LlmBackend,
    parallelism: usize,
) -> Result<Vec<TauRow>> {
    cohort.check()?;
    taus.iter()
        .map(|&tau_l| {
            let cfg = RoutingConfig { tau_l, ..base.clone() };
            let batch = route_batch(cohort.samples, cohort.assets, &cfg, model, backend, parallelism)?;
            if let Some(e) = batch.errors.into_iter().next() {
                return Err(e);
            }
            let pooled = adaptive_scores(&batch.outcomes);
            let auroc = match task_auroc(&pooled, cohort.labels, cohort.classes()) {
                Ok(v) => Some(v),
                Err(Error::DegenerateLabels) => None,
                Err(e) => return Err(e),
            };
            let s = batch.stats;
            Ok(TauRow {
                tau_l,
                tau_m: cfg.tau_m,
                auroc,
                pct_l: 100.0 * s.frac_l,
                pct_m: 100.0 * s.frac_m,
                pct_h: 100.0 * s.frac_h,
                expected_cost: s.expected_cost,
            })
        })
        .collect()
}
