//! On-disk embedding corpora.
//!
//! A corpus is three files in one directory: a JSON manifest, a raw binary
//! matrix of little-endian `f32` rows (row-major, no header), and a JSON Lines
//! metadata file whose row `i` describes binary row `i`. Rows are widened to
//! `f64` and re-normalized on load so cosine similarity reduces to a dot
//! product everywhere downstream.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
const EMBEDDING_FILE: &str = "embeddings.f32";
const METADATA_FILE: &str = "metadata.jsonl";

/// Unit-norm embedding with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `raw` to unit Euclidean norm.
    pub fn normalize(raw: &[f64]) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("<vector>".into()));
        }
        let norm = raw.iter().fold(0.0, |acc, v| acc + v * v).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm(None));
        }
        Ok(Self(raw.iter().map(|v| v / norm).collect()))
    }

    /// Wraps values that are already unit norm. Callers own that invariant.
    pub(crate) fn from_unit(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc + v * v).sqrt()
    }
}

/// Shorthand for [`EmbeddingVector::normalize`].
pub fn normalize(raw: &[f64]) -> Result<EmbeddingVector> {
    EmbeddingVector::normalize(raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

/// One row of a corpus: metadata plus its embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredRecord {
    pub id: String,
    pub split: Option<Split>,
    pub label: Option<String>,
    pub report: Option<String>,
    pub embedding: EmbeddingVector,
}

impl StoredRecord {
    pub fn new(id: impl Into<String>, embedding: EmbeddingVector) -> Self {
        Self {
            id: id.into(),
            split: None,
            label: None,
            report: None,
            embedding,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioRecord {
    pub id: String,
    pub split: Split,
    pub label: Option<String>,
    pub embedding: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalCorpusEntry {
    pub id: String,
    pub embedding: EmbeddingVector,
    pub report: String,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub dimension: usize,
    pub record_count: usize,
    pub embedding_file: String,
    pub metadata_file: String,
    pub checksum_sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetadataRow {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    report: Option<String>,
}

/// A loaded corpus, rows in metadata order.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub records: Vec<StoredRecord>,
}

impl Corpus {
    pub fn dimension(&self) -> usize {
        self.manifest.dimension
    }

    /// Views rows as audio records. Rows without a split are treated as test.
    pub fn audio_records(&self) -> Vec<AudioRecord> {
        self.records
            .iter()
            .map(|r| AudioRecord {
                id: r.id.clone(),
                split: r.split.unwrap_or(Split::Test),
                label: r.label.clone(),
                embedding: r.embedding.clone(),
            })
            .collect()
    }

    /// Views rows as retrieval entries; every row must carry a non-empty report.
    pub fn retrieval_entries(&self) -> Result<Vec<RetrievalCorpusEntry>> {
        self.records
            .iter()
            .map(|r| match r.report.as_deref() {
                Some(report) if !report.trim().is_empty() => Ok(RetrievalCorpusEntry {
                    id: r.id.clone(),
                    embedding: r.embedding.clone(),
                    report: report.to_string(),
                    label: r.label.clone(),
                }),
                _ => Err(Error::Config(format!("retrieval record {} has no report", r.id))),
            })
            .collect()
    }

    /// Looks up a row by exact id.
    pub fn get(&self, id: &str) -> Option<&StoredRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Loads a corpus from its manifest. `manifest_path` may name the manifest
/// file or the directory holding `manifest.json`.
pub fn load_corpus(manifest_path: impl AsRef<Path>) -> Result<Corpus> {
    let manifest_path = resolve_manifest(manifest_path.as_ref());
    let dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: CorpusManifest = serde_json::from_str(&text)
        .map_err(|e| Error::json(manifest_path.display().to_string(), e))?;
    if manifest.dimension == 0 {
        return Err(Error::Config(format!(
            "{}: dimension must be positive",
            manifest_path.display()
        )));
    }

    let emb_path = dir.join(&manifest.embedding_file);
    let bytes = fs::read(&emb_path).map_err(|e| Error::io(&emb_path, e))?;
    let actual = sha256_hex(&bytes);
    if !actual.eq_ignore_ascii_case(&manifest.checksum_sha256) {
        return Err(Error::ChecksumMismatch {
            path: emb_path,
            expected: manifest.checksum_sha256.clone(),
            actual,
        });
    }

    let meta_path = dir.join(&manifest.metadata_file);
    let rows = read_metadata(&meta_path)?;
    if rows.len() != manifest.record_count {
        return Err(Error::RecordCountMismatch {
            declared: manifest.record_count,
            found: rows.len(),
            what: meta_path.display().to_string(),
        });
    }

    let row_bytes = manifest.dimension * 4;
    if bytes.len() != manifest.record_count * row_bytes {
        let floats = bytes.len() / 4;
        let count = manifest.record_count;
        if bytes.len() % 4 == 0 && count > 0 && floats % count == 0 {
            return Err(Error::DimensionMismatch {
                expected: manifest.dimension,
                found: floats / count,
                record: None,
            });
        }
        return Err(Error::RecordCountMismatch {
            declared: count,
            found: bytes.len() / row_bytes,
            what: emb_path.display().to_string(),
        });
    }

    let mut seen = HashSet::with_capacity(rows.len());
    let mut records = Vec::with_capacity(rows.len());
    for (row, chunk) in rows.into_iter().zip(bytes.chunks_exact(row_bytes)) {
        if !seen.insert(row.id.clone()) {
            return Err(Error::DuplicateId(row.id));
        }
        let raw: Vec<f64> = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let embedding = EmbeddingVector::normalize(&raw).map_err(|e| match e {
            Error::NonFiniteValue(_) => Error::NonFiniteValue(row.id.clone()),
            Error::ZeroNorm(_) => Error::ZeroNorm(Some(row.id.clone())),
            other => other,
        })?;
        records.push(StoredRecord {
            id: row.id,
            split: row.split,
            label: row.label,
            report: row.report,
            embedding,
        });
    }
    Ok(Corpus { manifest, records })
}

fn resolve_manifest(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

fn read_metadata(path: &Path) -> Result<Vec<MetadataRow>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: MetadataRow = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("{}:{}", path.display(), lineno + 1), e))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Writes `records` to `out_dir` and returns the manifest that describes them.
pub fn save_corpus(records: &[StoredRecord], out_dir: impl AsRef<Path>) -> Result<CorpusManifest> {
    let out_dir = out_dir.as_ref();
    let first = records.first().ok_or(Error::EmptyCorpus)?;
    let dim = first.embedding.dim();
    let mut ids = HashSet::with_capacity(records.len());
    for r in records {
        if r.embedding.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.embedding.dim(),
                record: Some(r.id.clone()),
            });
        }
        if !ids.insert(r.id.as_str()) {
            return Err(Error::DuplicateId(r.id.clone()));
        }
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut bytes = Vec::with_capacity(records.len() * dim * 4);
    for r in records {
        for v in r.embedding.as_slice() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let emb_path = out_dir.join(EMBEDDING_FILE);
    fs::write(&emb_path, &bytes).map_err(|e| Error::io(&emb_path, e))?;

    let mut meta = Vec::new();
    for r in records {
        let row = MetadataRow {
            id: r.id.clone(),
            split: r.split,
            label: r.label.clone(),
            report: r.report.clone(),
        };
        serde_json::to_writer(&mut meta, &row).map_err(|e| Error::json("metadata row", e))?;
        meta.push(b'\n');
    }
    let meta_path = out_dir.join(METADATA_FILE);
    fs::write(&meta_path, &meta).map_err(|e| Error::io(&meta_path, e))?;

    let manifest = CorpusManifest {
        dimension: dim,
        record_count: records.len(),
        embedding_file: EMBEDDING_FILE.into(),
        metadata_file: METADATA_FILE.into(),
        checksum_sha256: sha256_hex(&bytes),
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let mut file = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    serde_json::to_writer_pretty(&mut file, &manifest).map_err(|e| Error::json("manifest", e))?;
    file.write_all(b"\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}
