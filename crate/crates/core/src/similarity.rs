//! Cosine and margin primitives shared by every tier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::EmbeddingVector;

/// Per-class scores in label-set order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub task_id: String,
    pub scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(task_id: impl Into<String>, scores: Vec<f64>) -> Self {
        Self {
            task_id: task_id.into(),
            scores,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Left-to-right dot product. The fixed order keeps results bit-identical
/// across runs and thread counts.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::dims(a.dim(), b.dim()));
    }
    Ok(dot(a.as_slice(), b.as_slice()).clamp(-1.0, 1.0))
}

pub fn score_against_texts(a: &EmbeddingVector, texts: &[EmbeddingVector]) -> Result<Vec<f64>> {
    if texts.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    texts.iter().map(|t| cosine(a, t)).collect()
}

/// Index of the largest score (lowest index wins ties) and the gap to the
/// runner-up.
pub fn top_two_margin(scores: &[f64]) -> Result<(usize, f64)> {
    if scores.len() < 2 {
        return Err(Error::TooFewScores(scores.len()));
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    let second = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((best, scores[best] - second))
}

/// Lowest index among the maxima.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}
