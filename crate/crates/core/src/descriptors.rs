//! Tier-M: descriptor profiling and rule-table voting.
//!
//! Each descriptor group holds mutually exclusive options. A recording picks
//! its best-matching option per group, and a rule table compares that profile
//! against one prototype profile per class. A class scores the fraction of
//! unmasked groups on which the profile agrees with its prototype.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{argmax, cosine, top_two_margin, ScoreVector};
use crate::store::{Corpus, EmbeddingVector};

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorGroup {
    pub group_id: String,
    pub option_texts: Vec<String>,
    pub option_embeddings: Vec<EmbeddingVector>,
}

impl DescriptorGroup {
    pub fn new(
        group_id: impl Into<String>,
        option_texts: Vec<String>,
        option_embeddings: Vec<EmbeddingVector>,
    ) -> Result<Self> {
        let group_id = group_id.into();
        if option_texts.len() < 2 {
            return Err(Error::Config(format!(
                "group {group_id} needs at least 2 options, has {}",
                option_texts.len()
            )));
        }
        if option_texts.len() != option_embeddings.len() {
            return Err(Error::Config(format!(
                "group {group_id}: {} options but {} embeddings",
                option_texts.len(),
                option_embeddings.len()
            )));
        }
        let mut seen = HashSet::new();
        for t in &option_texts {
            if !seen.insert(t) {
                return Err(Error::DuplicateId(format!("{group_id}/{t}")));
            }
        }
        Ok(Self {
            group_id,
            option_texts,
            option_embeddings,
        })
    }

    pub fn option_index(&self, text: &str) -> Option<usize> {
        self.option_texts.iter().position(|t| t == text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorTaxonomy {
    pub groups: Vec<DescriptorGroup>,
}

impl DescriptorTaxonomy {
    pub fn new(groups: Vec<DescriptorGroup>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Config("taxonomy has no descriptor groups".into()));
        }
        let mut seen = HashSet::new();
        for g in &groups {
            if !seen.insert(g.group_id.as_str()) {
                return Err(Error::DuplicateId(g.group_id.clone()));
            }
        }
        let dim = groups[0].option_embeddings[0].dim();
        for g in &groups {
            if let Some(bad) = g.option_embeddings.iter().find(|e| e.dim() != dim) {
                return Err(Error::dims(dim, bad.dim()));
            }
        }
        Ok(Self { groups })
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.groups[0].option_embeddings[0].dim()
    }

    /// Resolves option texts against a text-embedding corpus keyed by id.
    pub fn from_config(config: &TaxonomyConfig, texts: &Corpus) -> Result<Self> {
        let groups = config
            .groups
            .iter()
            .map(|g| {
                let embeddings = g
                    .options
                    .iter()
                    .map(|text| {
                        texts
                            .get(text)
                            .map(|r| r.embedding.clone())
                            .ok_or_else(|| Error::MissingText(text.clone()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                DescriptorGroup::new(g.id.clone(), g.options.clone(), embeddings)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(groups)
    }
}

/// The chosen option of one group and its cosine to the recording.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub option: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorProfile {
    /// `None` for masked groups.
    pub selections: Vec<Option<Selection>>,
    pub mask: Vec<bool>,
}

impl DescriptorProfile {
    pub fn unmasked(&self) -> usize {
        self.mask.iter().filter(|m| !**m).count()
    }

    /// One `group_id: option text` line per unmasked group.
    pub fn summary(&self, taxonomy: &DescriptorTaxonomy) -> String {
        let mut out = String::new();
        for (group, sel) in taxonomy.groups.iter().zip(&self.selections) {
            if let Some(sel) = sel {
                out.push_str(&group.group_id);
                out.push_str(": ");
                out.push_str(&group.option_texts[sel.option]);
                out.push('\n');
            }
        }
        out
    }
}

/// Class prototypes as option indices, `prototypes[class][group]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTable {
    pub task_id: String,
    pub class_names: Vec<String>,
    pub prototypes: Vec<Vec<usize>>,
}

impl RuleTable {
    /// Builds a table from option texts, checking that every class names a
    /// valid option for every group and nothing else.
    pub fn from_config(
        task_id: &str,
        task: &TaskRules,
        taxonomy: &DescriptorTaxonomy,
    ) -> Result<Self> {
        let mut prototypes = Vec::with_capacity(task.classes.len());
        for class in &task.classes {
            let proto = task.prototypes.get(class);
            let mut row = Vec::with_capacity(taxonomy.len());
            for group in &taxonomy.groups {
                let gap = || Error::CoverageGap {
                    task_id: task_id.to_string(),
                    class: class.clone(),
                    group: group.group_id.clone(),
                };
                let text = proto.and_then(|p| p.get(&group.group_id)).ok_or_else(gap)?;
                row.push(group.option_index(text).ok_or_else(gap)?);
            }
            if let Some(p) = proto {
                if let Some(extra) = p
                    .keys()
                    .find(|k| !taxonomy.groups.iter().any(|g| &g.group_id == *k))
                {
                    return Err(Error::Config(format!(
                        "task {task_id} class {class}: unknown group {extra}"
                    )));
                }
            }
            prototypes.push(row);
        }
        if let Some(extra) = task.prototypes.keys().find(|k| !task.classes.contains(k)) {
            return Err(Error::Config(format!(
                "task {task_id}: prototype for undeclared class {extra}"
            )));
        }
        Ok(Self {
            task_id: task_id.to_string(),
            class_names: task.classes.clone(),
            prototypes,
        })
    }

    fn check_covers(&self, groups: usize) -> Result<()> {
        for (class, row) in self.class_names.iter().zip(&self.prototypes) {
            if row.len() != groups {
                return Err(Error::CoverageGap {
                    task_id: self.task_id.clone(),
                    class: class.clone(),
                    group: format!("#{}", row.len()),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierMResult {
    pub profile: DescriptorProfile,
    pub rule_scores: ScoreVector,
    pub prediction: usize,
    pub confidence: f64,
}

/// Taxonomy + rule-table config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxonomyConfig {
    pub groups: Vec<GroupConfig>,
    pub tasks: BTreeMap<String, TaskRules>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub id: String,
    pub options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRules {
    pub classes: Vec<String>,
    pub prototypes: BTreeMap<String, BTreeMap<String, String>>,
}

impl TaxonomyConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn task(&self, task_id: &str) -> Result<&TaskRules> {
        self.tasks
            .get(task_id)
            .ok_or_else(|| Error::Config(format!("taxonomy file has no task {task_id}")))
    }
}

pub fn profile(
    a: &EmbeddingVector,
    taxonomy: &DescriptorTaxonomy,
    mask: &[bool],
) -> Result<DescriptorProfile> {
    if mask.len() != taxonomy.len() {
        return Err(Error::Config(format!(
            "mask has {} entries for {} groups",
            mask.len(),
            taxonomy.len()
        )));
    }
    if mask.iter().all(|m| *m) {
        return Err(Error::AllGroupsMasked);
    }
    let selections = taxonomy
        .groups
        .iter()
        .zip(mask)
        .map(|(group, &masked)| {
            if masked {
                return Ok(None);
            }
            let sims = group
                .option_embeddings
                .iter()
                .map(|t| cosine(a, t))
                .collect::<Result<Vec<_>>>()?;
            let option = argmax(&sims);
            Ok(Some(Selection {
                option,
                similarity: sims[option],
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DescriptorProfile {
        selections,
        mask: mask.to_vec(),
    })
}

pub fn rule_scores(p: &DescriptorProfile, table: &RuleTable) -> Result<ScoreVector> {
    table.check_covers(p.selections.len())?;
    let unmasked = p.unmasked();
    if unmasked == 0 {
        return Err(Error::AllGroupsMasked);
    }
    let scores = table
        .prototypes
        .iter()
        .map(|proto| {
            let hits = p
                .selections
                .iter()
                .zip(proto)
                .filter(|(sel, want)| sel.is_some_and(|s| s.option == **want))
                .count();
            hits as f64 / unmasked as f64
        })
        .collect();
    Ok(ScoreVector::new(table.task_id.clone(), scores))
}

pub fn tier_m_classify(
    a: &EmbeddingVector,
    taxonomy: &DescriptorTaxonomy,
    table: &RuleTable,
    mask: &[bool],
) -> Result<TierMResult> {
    let profile = profile(a, taxonomy, mask)?;
    let rule_scores = rule_scores(&profile, table)?;
    let (prediction, confidence) = top_two_margin(&rule_scores.scores)?;
    Ok(TierMResult {
        profile,
        rule_scores,
        prediction,
        confidence,
    })
}

/// Number of groups masked at `rate`, rounding half up.
pub fn mask_count(groups: usize, rate: f64) -> usize {
    (rate * groups as f64 + 0.5).floor() as usize
}

/// Seeded uniform choice of `round(rate * K)` groups to mask.
pub fn sample_mask(taxonomy: &DescriptorTaxonomy, rate: f64, seed: u64) -> Result<Vec<bool>> {
    mask_for(taxonomy.len(), rate, seed)
}

pub(crate) fn mask_for(groups: usize, rate: f64, seed: u64) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidMaskRate(rate));
    }
    let count = mask_count(groups, rate);
    if count >= groups {
        return Err(Error::InvalidMaskRate(rate));
    }
    let mut mask = vec![false; groups];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in sample(&mut rng, groups, count) {
        mask[i] = true;
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::normalize;

    fn basis(dim: usize, i: usize) -> EmbeddingVector {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        normalize(&v).unwrap()
    }

    /// K groups of 3 options each, option (k, m) on axis 3k + m.
    fn taxonomy(k: usize) -> DescriptorTaxonomy {
        let dim = 3 * k;
        DescriptorTaxonomy::new(
            (0..k)
                .map(|g| {
                    DescriptorGroup::new(
                        format!("g{g}"),
                        (0..3).map(|m| format!("g{g}o{m}")).collect(),
                        (0..3).map(|m| basis(dim, 3 * g + m)).collect(),
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    fn table(protos: Vec<Vec<usize>>) -> RuleTable {
        RuleTable {
            task_id: "t".into(),
            class_names: (0..protos.len()).map(|c| format!("c{c}")).collect(),
            prototypes: protos,
        }
    }

    fn profile_of(options: &[usize]) -> DescriptorProfile {
        DescriptorProfile {
            selections: options
                .iter()
                .map(|&o| Some(Selection { option: o, similarity: 0.0 }))
                .collect(),
            mask: vec![false; options.len()],
        }
    }

    #[test]
    fn exact_option_match_selected() {
        let tax = taxonomy(2);
        let p = profile(&basis(6, 3), &tax, &[false, false]).unwrap();
        assert_eq!(p.selections[1], Some(Selection { option: 0, similarity: 1.0 }));
        assert_eq!(p, profile(&basis(6, 3), &tax, &[false, false]).unwrap());
    }

    #[test]
    fn constructed_profile_recovered() {
        let tax = taxonomy(6);
        let want = [0, 1, 2, 0, 1, 2];
        let mut raw = vec![0.0; 18];
        for (g, &m) in want.iter().enumerate() {
            for (i, x) in tax.groups[g].option_embeddings[m].as_slice().iter().enumerate() {
                raw[i] += x;
            }
        }
        let a = normalize(&raw).unwrap();
        let p = profile(&a, &tax, &[false; 6]).unwrap();
        // exhaustive cosine oracle per group
        for (g, group) in tax.groups.iter().enumerate() {
            let sims: Vec<f64> = group
                .option_embeddings
                .iter()
                .map(|t| cosine(&a, t).unwrap())
                .collect();
            let best = (0..sims.len())
                .max_by(|&i, &j| sims[i].partial_cmp(&sims[j]).unwrap().then(j.cmp(&i)))
                .unwrap();
            assert_eq!(best, want[g]);
            assert_eq!(p.selections[g].unwrap().option, best);
        }
    }

    #[test]
    fn all_masked_rejected() {
        let tax = taxonomy(2);
        assert!(matches!(
            profile(&basis(6, 0), &tax, &[true, true]),
            Err(Error::AllGroupsMasked)
        ));
    }

    #[test]
    fn split_agreement_gives_zero_margin() {
        let t = table(vec![vec![0, 0, 0, 1, 1, 1], vec![1, 1, 1, 0, 0, 0]]);
        let s = rule_scores(&profile_of(&[0, 0, 0, 0, 0, 0]), &t).unwrap();
        assert_eq!(s.scores, vec![0.5, 0.5]);
        assert_eq!(top_two_margin(&s.scores).unwrap().1, 0.0);
    }

    #[test]
    fn masked_groups_do_not_count() {
        let t = table(vec![vec![0; 6], vec![1; 6]]);
        let mut p = profile_of(&[0, 0, 0, 2, 2, 2]);
        for g in 3..6 {
            p.selections[g] = None;
            p.mask[g] = true;
        }
        assert_eq!(rule_scores(&p, &t).unwrap().scores, vec![1.0, 0.0]);
    }

    #[test]
    fn coverage_gap_detected() {
        let t = table(vec![vec![0; 5], vec![1; 6]]);
        assert!(matches!(
            rule_scores(&profile_of(&[0; 6]), &t),
            Err(Error::CoverageGap { .. })
        ));
    }

    #[test]
    fn prototype_profile_margin_matches_overlap_oracle() {
        let protos = vec![
            vec![0, 0, 0, 0, 0, 0],
            vec![0, 1, 1, 1, 1, 1],
            vec![0, 0, 2, 2, 1, 1],
        ];
        let tax = taxonomy(6);
        let t = table(protos.clone());
        let mut raw = vec![0.0; 18];
        for g in 0..6 {
            raw[3 * g] = 1.0;
        }
        let r = tier_m_classify(&normalize(&raw).unwrap(), &tax, &t, &[false; 6]).unwrap();
        let best_other = protos[1..]
            .iter()
            .map(|p| p.iter().zip(&protos[0]).filter(|(a, b)| a == b).count())
            .max()
            .unwrap();
        assert_eq!(r.prediction, 0);
        assert_eq!(r.confidence, 1.0 - best_other as f64 / 6.0);
    }

    #[test]
    fn duplicate_prototypes_never_confident() {
        let tax = taxonomy(3);
        let t = table(vec![vec![1, 2, 0], vec![1, 2, 0]]);
        for axis in 0..9 {
            let r = tier_m_classify(&basis(9, axis), &tax, &t, &[false; 3]).unwrap();
            assert_eq!(r.confidence, 0.0);
        }
    }

    #[test]
    fn non_distinguishing_group_mask_keeps_argmax() {
        let tax = taxonomy(3);
        // group 2 has the same option for both classes
        let t = table(vec![vec![0, 0, 1], vec![1, 2, 1]]);
        for axis in 0..9 {
            let a = basis(9, axis);
            let full = tier_m_classify(&a, &tax, &t, &[false; 3]);
            let masked = tier_m_classify(&a, &tax, &t, &[false, false, true]);
            assert_eq!(full.unwrap().prediction, masked.unwrap().prediction);
        }
    }

    #[test]
    fn mask_counts() {
        let tax = taxonomy(6);
        assert_eq!(sample_mask(&tax, 0.0, 3).unwrap(), vec![false; 6]);
        let half = sample_mask(&tax, 0.5, 11).unwrap();
        assert_eq!(half.iter().filter(|m| **m).count(), 3);
        assert_eq!(half, sample_mask(&tax, 0.5, 11).unwrap());
        assert_eq!(mask_count(6, 0.2), 1);
        assert_eq!(sample_mask(&tax, 0.2, 5).unwrap().iter().filter(|m| **m).count(), 1);
        assert!(sample_mask(&tax, 1.0, 0).is_err());
        assert!(sample_mask(&tax, 0.95, 0).is_err());
        assert!(sample_mask(&tax, -0.1, 0).is_err());
    }

    #[test]
    fn summary_lists_unmasked_groups() {
        let tax = taxonomy(2);
        let p = profile(&basis(6, 4), &tax, &[true, false]).unwrap();
        assert_eq!(p.summary(&tax), "g1: g1o1\n");
    }
}
