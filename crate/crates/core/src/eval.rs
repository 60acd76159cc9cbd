//! AUROC metrics and tier-stratified reporting.
//!
//! Binary tasks are scored on the class-1 column; tasks with more classes use
//! the unweighted mean of one-vs-rest AUROCs over the classes that occur.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::router::{RoutingOutcome, Tier};

pub const TAU_M_GRID: [f64; 5] = [0.04, 0.08, 0.12, 0.16, 0.20];

/// Average 1-based ranks, ties sharing the mean of their positions.
pub fn average_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Mann-Whitney AUROC with half credit for ties.
pub fn auroc_binary(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dims(labels.len(), scores.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFiniteValue("score".into()));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, l)| **l).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroAuroc {
    pub macro_auroc: f64,
    /// `None` for classes that never or always occur.
    pub per_class: Vec<Option<f64>>,
}

pub fn auroc_macro_ovr(score_vectors: &[Vec<f64>], labels: &[usize], num_classes: usize) -> Result<MacroAuroc> {
    if score_vectors.len() != labels.len() {
        return Err(Error::dims(labels.len(), score_vectors.len()));
    }
    let mut per_class = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        let indicator: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        let column = score_vectors
            .iter()
            .map(|s| s.get(c).copied().ok_or_else(|| Error::dims(num_classes, s.len())))
            .collect::<Result<Vec<_>>>()?;
        per_class.push(match auroc_binary(&column, &indicator) {
            Ok(v) => Some(v),
            Err(Error::DegenerateLabels) => None,
            Err(e) => return Err(e),
        });
    }
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    if present.len() < 2 && num_classes > 2 || present.is_empty() {
        return Err(Error::DegenerateLabels);
    }
    Ok(MacroAuroc {
        macro_auroc: present.iter().sum::<f64>() / present.len() as f64,
        per_class,
    })
}

/// Task-level AUROC: class-1 column for binary tasks, macro one-vs-rest otherwise.
pub fn task_auroc(score_vectors: &[Vec<f64>], labels: &[usize], num_classes: usize) -> Result<f64> {
    if num_classes == 2 {
        let column: Vec<f64> = score_vectors
            .iter()
            .map(|s| s.get(1).copied().ok_or_else(|| Error::dims(2, s.len())))
            .collect::<Result<_>>()?;
        let positive: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        auroc_binary(&column, &positive)
    } else {
        auroc_macro_ovr(score_vectors, labels, num_classes).map(|m| m.macro_auroc)
    }
}

/// Name of the averaging rule `task_auroc` applies.
pub fn averaging_name(num_classes: usize) -> &'static str {
    if num_classes == 2 {
        "binary (class-1 score)"
    } else {
        "macro one-vs-rest"
    }
}

fn optional(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::DegenerateLabels) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Replaces each class score by its fractional rank within the sample's
/// finalizing-tier bucket so that scores from different tiers can be pooled.
pub fn adaptive_scores(outcomes: &[RoutingOutcome]) -> Vec<Vec<f64>> {
    let mut pooled: Vec<Vec<f64>> = outcomes.iter().map(|o| vec![0.0; o.final_scores.len()]).collect();
    for tier in [Tier::L, Tier::M, Tier::H] {
        let members: Vec<usize> = (0..outcomes.len()).filter(|&i| outcomes[i].final_tier == tier).collect();
        if members.is_empty() {
            continue;
        }
        let classes = outcomes[members[0]].final_scores.len();
        let size = members.len() as f64;
        let columns = (0..classes).map(|c| members.iter().map(|&i| outcomes[i].final_scores[c]).collect::<Vec<f64>>());
        for (c, column) in columns.enumerate() {
            for (&i, r) in members.iter().zip(average_ranks(&column)) {
                pooled[i][c] = r / size;
            }
        }
    }
    pooled
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub tier: Tier,
    pub count: usize,
    /// Fraction of all samples, computed as in `BatchStats`.
    pub share: f64,
    pub tier_l_auroc: Option<f64>,
    pub adaptive_auroc: Option<f64>,
    /// `(adaptive - tier_l) / tier_l`; absent for the L bucket.
    pub relative_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierStratifiedReport {
    pub n: usize,
    pub rows: Vec<BucketRow>,
}

impl TierStratifiedReport {
    pub fn row(&self, tier: Tier) -> &BucketRow {
        self.rows.iter().find(|r| r.tier == tier).expect("all three tiers present")
    }
}

pub fn tier_stratified(outcomes: &[RoutingOutcome], labels: &[usize], num_classes: usize) -> Result<TierStratifiedReport> {
    if outcomes.len() != labels.len() {
        return Err(Error::dims(labels.len(), outcomes.len()));
    }
    let adaptive = adaptive_scores(outcomes);
    let n = outcomes.len();
    let mut rows = Vec::with_capacity(3);
    for tier in [Tier::L, Tier::M, Tier::H] {
        let members: Vec<usize> = (0..n).filter(|&i| outcomes[i].final_tier == tier).collect();
        let y: Vec<usize> = members.iter().map(|&i| labels[i]).collect();
        let (tier_l_auroc, adaptive_auroc) = if members.is_empty() {
            (None, None)
        } else {
            let tl: Vec<Vec<f64>> = members.iter().map(|&i| outcomes[i].tier_l.scores.scores.clone()).collect();
            let ad: Vec<Vec<f64>> = members.iter().map(|&i| adaptive[i].clone()).collect();
            (
                optional(task_auroc(&tl, &y, num_classes))?,
                optional(task_auroc(&ad, &y, num_classes))?,
            )
        };
        let relative_gain = match (tier, tier_l_auroc, adaptive_auroc) {
            (Tier::L, _, _) => None,
            (_, Some(t), Some(a)) if t != 0.0 => Some((a - t) / t),
            _ => None,
        };
        rows.push(BucketRow {
            tier,
            count: members.len(),
            share: if n == 0 { 0.0 } else { members.len() as f64 / n as f64 },
            tier_l_auroc,
            adaptive_auroc,
            relative_gain,
        });
    }
    Ok(TierStratifiedReport { n, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    /// AUROC on the finalized subset, when it has both classes.
    pub metric: Option<f64>,
    pub finalized: usize,
    /// Fraction of Tier-M-reaching samples that finalize at this threshold.
    pub finalized_frac: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub selected: f64,
}

/// Picks `tau_m` from validation outcomes: the candidate whose Tier-M
/// finalized subset (`c_M >= tau`) has the best AUROC, smallest tau on ties.
pub fn select_tau_m(outcomes: &[RoutingOutcome], labels: &[usize], num_classes: usize, grid: &[f64]) -> Result<SweepResult> {
    if outcomes.is_empty() {
        return Err(Error::EmptySweep);
    }
    if outcomes.len() != labels.len() {
        return Err(Error::dims(labels.len(), outcomes.len()));
    }
    let reached: Vec<usize> = (0..outcomes.len()).filter(|&i| outcomes[i].tier_m.is_some()).collect();
    let mut points = Vec::with_capacity(grid.len());
    for &tau in grid {
        let subset: Vec<usize> = reached
            .iter()
            .copied()
            .filter(|&i| outcomes[i].c_m.is_some_and(|c| c >= tau))
            .collect();
        let scores: Vec<Vec<f64>> = subset
            .iter()
            .map(|&i| outcomes[i].tier_m.as_ref().map(|m| m.rule_scores.scores.clone()).unwrap_or_default())
            .collect();
        let y: Vec<usize> = subset.iter().map(|&i| labels[i]).collect();
        let metric = if subset.is_empty() { None } else { optional(task_auroc(&scores, &y, num_classes))? };
        points.push(SweepPoint {
            tau,
            metric,
            finalized: subset.len(),
            finalized_frac: if reached.is_empty() { 0.0 } else { subset.len() as f64 / reached.len() as f64 },
        });
    }
    let selected = points
        .iter()
        .filter_map(|p| p.metric.map(|m| (p.tau, m)))
        .reduce(|best, cand| {
            if cand.1 > best.1 || (cand.1 == best.1 && cand.0 < best.0) {
                cand
            } else {
                best
            }
        })
        .ok_or(Error::EmptySweep)?
        .0;
    Ok(SweepResult { points, selected })
}

/// Mean and sample standard deviation (Welford). Identical inputs give sd 0.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let sd = if values.len() > 1 { (m2 / (values.len() - 1) as f64).sqrt() } else { 0.0 };
    (mean, sd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::ScoreVector;
    use crate::tier_l::TierLResult;
    use proptest::prelude::*;

    fn brute(scores: &[f64], labels: &[bool]) -> f64 {
        let mut credit = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        credit += 1.0;
                    } else if scores[i] == scores[j] {
                        credit += 0.5;
                    }
                }
            }
        }
        credit / pairs
    }

    #[test]
    fn binary_examples() {
        assert_eq!(auroc_binary(&[0.9, 0.8, 0.3, 0.2], &[true, true, false, false]).unwrap(), 1.0);
        let s = [0.1, 0.2, 0.3, 0.4];
        let y = [false, true, false, true];
        assert_eq!(brute(&s, &y), 0.75);
        assert_eq!(auroc_binary(&s, &y).unwrap(), 0.75);
        assert_eq!(auroc_binary(&[0.5; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert!(matches!(auroc_binary(&[0.1, 0.2], &[true, true]), Err(Error::DegenerateLabels)));
    }

    #[test]
    fn macro_reductions() {
        let p = [0.9, 0.2, 0.6, 0.4, 0.7];
        let y = [1usize, 0, 1, 0, 0];
        let vectors: Vec<Vec<f64>> = p.iter().map(|&x| vec![1.0 - x, x]).collect();
        let m = auroc_macro_ovr(&vectors, &y, 2).unwrap();
        let bin = auroc_binary(&p, &y.map(|v| v == 1)).unwrap();
        assert!((m.macro_auroc - bin).abs() < 1e-15);

        let y3 = [0usize, 1, 2, 2, 1, 0];
        let onehot: Vec<Vec<f64>> = y3.iter().map(|&c| (0..3).map(|k| (k == c) as u8 as f64).collect()).collect();
        assert_eq!(auroc_macro_ovr(&onehot, &y3, 3).unwrap().macro_auroc, 1.0);
    }

    #[test]
    fn macro_skips_absent_classes() {
        let y = [0usize, 1, 0, 1];
        let s: Vec<Vec<f64>> = (0..4).map(|i| vec![0.1 * i as f64, 0.2, 0.3]).collect();
        let m = auroc_macro_ovr(&s, &y, 3).unwrap();
        assert!(m.per_class[2].is_none());
        assert!(matches!(auroc_macro_ovr(&s, &[0, 0, 0, 0], 3), Err(Error::DegenerateLabels)));
    }

    fn outcome(tier: Tier, scores: Vec<f64>) -> RoutingOutcome {
        RoutingOutcome {
            sample_id: String::new(),
            final_tier: tier,
            prediction: 0,
            final_scores: scores.clone(),
            c_l: 0.0,
            c_m: None,
            tier_l: TierLResult { scores: ScoreVector::new("t", scores), prediction: 0, confidence: 0.0 },
            tier_m: None,
            tier_h: None,
            elapsed_ms: 0.0,
        }
    }

    #[test]
    fn adaptive_rank_conventions() {
        let single = adaptive_scores(&[outcome(Tier::M, vec![0.3, 0.7])]);
        assert_eq!(single, vec![vec![1.0, 1.0]]);

        let outs: Vec<RoutingOutcome> = [0.1, 0.5, 0.3, 0.5]
            .iter()
            .map(|&x| outcome(Tier::L, vec![-x, x]))
            .collect();
        let pooled = adaptive_scores(&outs);
        let col: Vec<f64> = pooled.iter().map(|v| v[1]).collect();
        assert_eq!(col, vec![0.25, 0.875, 0.5, 0.875]);
    }

    #[test]
    fn pooling_is_scale_free() {
        let y = [1usize, 0, 1, 0, 1, 0, 0, 1];
        let raw = [0.9, 0.1, 0.4, 0.6, 0.7, 0.2, 0.3, 0.8];
        let tiers = [Tier::L, Tier::L, Tier::L, Tier::L, Tier::H, Tier::H, Tier::H, Tier::H];
        let build = |scale: f64| -> Vec<RoutingOutcome> {
            raw.iter()
                .zip(tiers)
                .map(|(&x, t)| {
                    let k = if t == Tier::H { scale } else { 1.0 };
                    outcome(t, vec![0.0, x * k])
                })
                .collect()
        };
        let a = task_auroc(&adaptive_scores(&build(1.0)), &y, 2).unwrap();
        let b = task_auroc(&adaptive_scores(&build(100.0)), &y, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stratified_l_bucket_matches_tier_l() {
        let y = [1usize, 0, 1, 0, 1, 0];
        let outs: Vec<RoutingOutcome> = [0.9, 0.2, 0.6, 0.65, 0.55, 0.5]
            .iter()
            .enumerate()
            .map(|(i, &x)| outcome(if i < 4 { Tier::L } else { Tier::M }, vec![1.0 - x, x]))
            .collect();
        let r = tier_stratified(&outs, &y, 2).unwrap();
        let l = r.row(Tier::L);
        assert_eq!(l.tier_l_auroc, l.adaptive_auroc);
        assert!(l.relative_gain.is_none());
        let h = r.row(Tier::H);
        assert_eq!((h.count, h.share, h.adaptive_auroc), (0, 0.0, None));
        let total: f64 = r.rows.iter().map(|b| b.share).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    fn with_tier_m(c_m: f64, score1: f64) -> RoutingOutcome {
        use crate::descriptors::{DescriptorProfile, TierMResult};
        let mut o = outcome(Tier::M, vec![1.0 - score1, score1]);
        o.c_m = Some(c_m);
        o.tier_m = Some(TierMResult {
            profile: DescriptorProfile { selections: vec![], mask: vec![] },
            rule_scores: ScoreVector::new("t", vec![1.0 - score1, score1]),
            prediction: 0,
            confidence: c_m,
        });
        o
    }

    #[test]
    fn tau_m_selection_rules() {
        let outs = vec![with_tier_m(0.5, 0.9), with_tier_m(0.5, 0.1), with_tier_m(0.1, 0.2), with_tier_m(0.1, 0.8)];
        let y = [1usize, 0, 1, 0];
        assert_eq!(select_tau_m(&outs, &y, 2, &[0.3]).unwrap().selected, 0.3);
        // 0.05 keeps everything (AUROC 0.75), 0.3 keeps the clean pair (AUROC 1)
        let r = select_tau_m(&outs, &y, 2, &[0.05, 0.3]).unwrap();
        assert_eq!(r.selected, 0.3);
        // equal metrics resolve to the smaller tau
        let r = select_tau_m(&outs, &y, 2, &[0.4, 0.3]).unwrap();
        assert_eq!(r.selected, 0.3);
        assert!(matches!(select_tau_m(&outs, &y, 2, &[0.9]), Err(Error::EmptySweep)));
    }

    #[test]
    fn welford_exact_for_constants() {
        assert_eq!(mean_sd(&[0.7123; 5]), (0.7123, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert!((m - 2.0).abs() < 1e-15 && (s - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn matches_pairwise_oracle(
            data in prop::collection::vec((0i32..20, any::<bool>()), 2..300)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 7.0).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
            let fast = auroc_binary(&scores, &labels).unwrap();
            prop_assert!((fast - brute(&scores, &labels)).abs() <= 1e-12);

            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            let other = auroc_binary(&scores, &flipped).unwrap();
            prop_assert!((fast + other - 1.0).abs() <= f64::EPSILON);

            let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 1.0).collect();
            prop_assert!((auroc_binary(&warped, &labels).unwrap() - fast).abs() <= 1e-12);
        }
    }
}
