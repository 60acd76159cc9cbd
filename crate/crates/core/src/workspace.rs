//! Assembles task assets from embedding-store manifests on disk.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::descriptors::{DescriptorTaxonomy, RuleTable, TaxonomyConfig};
use crate::error::{Error, Result};
use crate::retrieval::RetrievalIndex;
use crate::router::TaskAssets;
use crate::store::{load_corpus, AudioRecord, EmbeddingVector, Split};
use crate::tier_l::LabelSet;
use crate::world::WorldLayout;

/// Locations of the five inputs one task needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPaths {
    /// Label-name embeddings, ids are class names.
    pub labels: PathBuf,
    /// Descriptor option embeddings, ids are option texts.
    pub templates: PathBuf,
    pub taxonomy: PathBuf,
    pub corpus: PathBuf,
    pub audio: PathBuf,
}

impl TaskPaths {
    pub fn from_world(root: impl AsRef<Path>) -> Self {
        let layout = WorldLayout::at(root.as_ref());
        Self {
            labels: layout.labels,
            templates: layout.templates,
            taxonomy: layout.taxonomy,
            corpus: layout.corpus,
            audio: layout.audio,
        }
    }

    /// Fails on the first path that does not exist.
    pub fn check_exist(&self) -> Result<()> {
        for p in [&self.labels, &self.templates, &self.taxonomy, &self.corpus, &self.audio] {
            if !p.exists() {
                return Err(Error::Config(format!("path does not exist: {}", p.display())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LoadedTask {
    pub task_id: String,
    pub assets: TaskAssets,
    pub records: Vec<AudioRecord>,
}

impl LoadedTask {
    /// `(id, embedding)` pairs and class indices of one split, in file order.
    pub fn split(&self, split: Split) -> (Vec<(String, EmbeddingVector)>, Vec<Option<usize>>) {
        self.records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| {
                let label = r.label.as_deref().and_then(|l| self.assets.labels.index_of(l));
                ((r.id.clone(), r.embedding.clone()), label)
            })
            .unzip()
    }

    pub fn record(&self, id: &str) -> Option<&AudioRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

/// Loads and cross-validates a task. With `task_id` unset the taxonomy file
/// must define exactly one task.
pub fn load_task(paths: &TaskPaths, task_id: Option<&str>) -> Result<LoadedTask> {
    paths.check_exist()?;
    let config = TaxonomyConfig::load(&paths.taxonomy)?;
    let task_id = match task_id {
        Some(t) => t.to_string(),
        None if config.tasks.len() == 1 => config.tasks.keys().next().cloned().unwrap_or_default(),
        None => {
            return Err(Error::Config(format!(
                "{} defines {} tasks; choose one with --task",
                paths.taxonomy.display(),
                config.tasks.len()
            )))
        }
    };
    let rules_config = config.task(&task_id)?;

    let label_store = load_corpus(&paths.labels)?;
    let embeddings = rules_config
        .classes
        .iter()
        .map(|c| {
            label_store
                .get(c)
                .map(|r| r.embedding.clone())
                .ok_or_else(|| Error::MissingText(c.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = LabelSet::new(task_id.clone(), rules_config.classes.clone(), embeddings)?;

    let taxonomy = DescriptorTaxonomy::from_config(&config, &load_corpus(&paths.templates)?)?;
    let rules = RuleTable::from_config(&task_id, rules_config, &taxonomy)?;
    let index = RetrievalIndex::new(load_corpus(&paths.corpus)?.retrieval_entries()?)?;
    let assets = TaskAssets::new(labels, taxonomy, rules, index)?;

    let audio = load_corpus(&paths.audio)?;
    if audio.dimension() != assets.dimension() {
        return Err(Error::dims(assets.dimension(), audio.dimension()));
    }
    let records = audio.audio_records();
    for r in &records {
        if let Some(l) = &r.label {
            if assets.labels.index_of(l).is_none() {
                return Err(Error::UnknownLabel {
                    record: r.id.clone(),
                    label: l.clone(),
                });
            }
        }
    }
    Ok(LoadedTask { task_id, assets, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{export_world, generate_world, WorldConfig};

    #[test]
    fn exported_world_loads_like_generated() {
        let cfg = WorldConfig { corpus_size: 50, test_size: 30, valid_size: 10, ..WorldConfig::default() };
        let world = generate_world(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_world(&world, dir.path()).unwrap();
        let task = load_task(&TaskPaths::from_world(dir.path()), None).unwrap();
        assert_eq!(task.task_id, cfg.task_id);
        assert_eq!(task.assets.labels.class_names, world.labels.class_names);
        let (samples, labels) = task.split(Split::Test);
        assert_eq!(samples.len(), 30);
        let oracle: Vec<Option<usize>> = world.oracle_labels(Split::Test).into_iter().map(Some).collect();
        assert_eq!(labels, oracle);
    }

    #[test]
    fn missing_path_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_task(&TaskPaths::from_world(dir.path()), None).unwrap_err();
        assert!(err.to_string().contains("labels"), "{err}");
    }
}
