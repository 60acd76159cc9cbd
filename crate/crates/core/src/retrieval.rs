//! Exact cosine k-nearest-neighbor search over the report corpus.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::dot;
use crate::store::{EmbeddingVector, RetrievalCorpusEntry};

#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    entries: Vec<RetrievalCorpusEntry>,
    dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub entry_id: String,
    pub similarity: f64,
    pub rank: usize,
}

/// Higher similarity first, then ascending id.
fn neighbor_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.1.cmp(b.1))
}

pub fn build_index(entries: Vec<RetrievalCorpusEntry>) -> Result<RetrievalIndex> {
    RetrievalIndex::new(entries)
}

impl RetrievalIndex {
    pub fn new(entries: Vec<RetrievalCorpusEntry>) -> Result<Self> {
        let dimension = entries.first().ok_or(Error::EmptyCorpus)?.embedding.dim();
        let mut ids = HashSet::with_capacity(entries.len());
        for e in &entries {
            if e.embedding.dim() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: e.embedding.dim(),
                    record: Some(e.id.clone()),
                });
            }
            if !ids.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self { entries, dimension })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[RetrievalCorpusEntry] {
        &self.entries
    }

    pub fn entry(&self, id: &str) -> Option<&RetrievalCorpusEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// The `k` most similar entries, clamped to the corpus size.
    pub fn query_topk(&self, a: &EmbeddingVector, k: usize) -> Result<Vec<Neighbor>> {
        if a.dim() != self.dimension {
            return Err(Error::dims(self.dimension, a.dim()));
        }
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let q = a.as_slice();
        let mut scored: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (dot(q, e.embedding.as_slice()).clamp(-1.0, 1.0), i))
            .collect();
        let k = k.min(scored.len());
        let cmp = |x: &(f64, usize), y: &(f64, usize)| {
            neighbor_order(
                (x.0, &self.entries[x.1].id),
                (y.0, &self.entries[y.1].id),
            )
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(r, (similarity, i))| Neighbor {
                entry_id: self.entries[i].id.clone(),
                similarity,
                rank: r + 1,
            })
            .collect())
    }
}

pub fn query_topk(index: &RetrievalIndex, a: &EmbeddingVector, k: usize) -> Result<Vec<Neighbor>> {
    index.query_topk(a, k)
}
