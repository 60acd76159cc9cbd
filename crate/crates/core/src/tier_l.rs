//! Tier-L: cosine against class-name embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{score_against_texts, top_two_margin, ScoreVector};
use crate::store::EmbeddingVector;

/// Ordered classes of one task with their name embeddings. The order fixes
/// the index layout of every score vector for the task.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub task_id: String,
    pub class_names: Vec<String>,
    pub label_embeddings: Vec<EmbeddingVector>,
}

impl LabelSet {
    pub fn new(
        task_id: impl Into<String>,
        class_names: Vec<String>,
        label_embeddings: Vec<EmbeddingVector>,
    ) -> Result<Self> {
        let task_id = task_id.into();
        if class_names.len() < 2 {
            return Err(Error::DegenerateLabelSet {
                task_id,
                classes: class_names.len(),
            });
        }
        if class_names.len() != label_embeddings.len() {
            return Err(Error::Config(format!(
                "{} class names but {} label embeddings",
                class_names.len(),
                label_embeddings.len()
            )));
        }
        for (i, name) in class_names.iter().enumerate() {
            if class_names[..i].contains(name) {
                return Err(Error::DuplicateId(name.clone()));
            }
        }
        let dim = label_embeddings[0].dim();
        if let Some(bad) = label_embeddings.iter().find(|e| e.dim() != dim) {
            return Err(Error::dims(dim, bad.dim()));
        }
        Ok(Self {
            task_id,
            class_names,
            label_embeddings,
        })
    }

    pub fn len(&self) -> usize {
        self.class_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_names.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.label_embeddings[0].dim()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierLResult {
    pub scores: ScoreVector,
    pub prediction: usize,
    pub confidence: f64,
}

pub fn tier_l_classify(a: &EmbeddingVector, labels: &LabelSet) -> Result<TierLResult> {
    if labels.len() < 2 {
        return Err(Error::DegenerateLabelSet {
            task_id: labels.task_id.clone(),
            classes: labels.len(),
        });
    }
    let scores = score_against_texts(a, &labels.label_embeddings)?;
    let (prediction, confidence) = top_two_margin(&scores)?;
    Ok(TierLResult {
        scores: ScoreVector::new(labels.task_id.clone(), scores),
        prediction,
        confidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::normalize;

    fn binary() -> LabelSet {
        LabelSet::new(
            "t",
            vec!["pos".into(), "neg".into()],
            vec![normalize(&[1.0, 0.0]).unwrap(), normalize(&[0.0, 1.0]).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn aligned_with_first_label() {
        let r = tier_l_classify(&normalize(&[1.0, 0.0]).unwrap(), &binary()).unwrap();
        assert_eq!(r.prediction, 0);
        assert_eq!(r.scores.scores, vec![1.0, 0.0]);
        assert_eq!(r.confidence, 1.0);
    }

    #[test]
    fn equidistant_is_zero_margin_class_zero() {
        let r = tier_l_classify(&normalize(&[1.0, 1.0]).unwrap(), &binary()).unwrap();
        assert_eq!(r.prediction, 0);
        assert_eq!(r.confidence, 0.0);
    }

    #[test]
    fn same_cosines_same_result() {
        // Both differ only in a coordinate orthogonal to every label.
        let labels = LabelSet::new(
            "t",
            vec!["a".into(), "b".into()],
            vec![
                normalize(&[1.0, 0.0, 0.0]).unwrap(),
                normalize(&[0.0, 1.0, 0.0]).unwrap(),
            ],
        )
        .unwrap();
        let x = normalize(&[0.6, 0.0, 0.8]).unwrap();
        let y = normalize(&[0.6, 0.0, -0.8]).unwrap();
        assert_eq!(
            tier_l_classify(&x, &labels).unwrap(),
            tier_l_classify(&y, &labels).unwrap()
        );
    }

    #[test]
    fn degenerate_label_sets_rejected() {
        let err = LabelSet::new("t", vec!["only".into()], vec![normalize(&[1.0]).unwrap()]);
        assert!(matches!(err, Err(Error::DegenerateLabelSet { classes: 1, .. })));
        let dup = LabelSet::new(
            "t",
            vec!["a".into(), "a".into()],
            vec![normalize(&[1.0, 0.0]).unwrap(), normalize(&[0.0, 1.0]).unwrap()],
        );
        assert!(matches!(dup, Err(Error::DuplicateId(_))));
    }

    #[test]
    fn dimension_mismatch() {
        let a = normalize(&[1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            tier_l_classify(&a, &binary()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
