//! Seeded synthetic embedding worlds.
//!
//! Class directions and descriptor options sit on orthogonal axes. A sample
//! of class `y` is `normalize(s * mu_y + q * mean(prototype options of y) +
//! sigma * noise)`, where `noise` has i.i.d. `N(0, 1/D)` entries so its
//! expected norm is about 1. `s` controls how much Tier-L can see, `q` how
//! much Tier-M can see, and the retrieval corpus is drawn the same way with
//! its labels written into the report text.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::descriptors::{
    DescriptorGroup, DescriptorTaxonomy, GroupConfig, RuleTable, TaskRules, TaxonomyConfig,
};
use crate::error::{Error, Result};
use crate::retrieval::RetrievalIndex;
use crate::router::TaskAssets;
use crate::store::{
    save_corpus, AudioRecord, CorpusManifest, EmbeddingVector, RetrievalCorpusEntry, Split,
    StoredRecord,
};
use crate::tier_l::LabelSet;

pub const TAXONOMY_FILE: &str = "taxonomy.json";
pub const WORLD_CONFIG_FILE: &str = "world.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub task_id: String,
    pub dimension: usize,
    pub num_classes: usize,
    pub class_separation: f64,
    pub descriptor_informativeness: f64,
    /// Options per descriptor group.
    pub group_sizes: Vec<usize>,
    pub corpus_size: usize,
    pub test_size: usize,
    pub valid_size: usize,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            task_id: "synthetic".into(),
            dimension: 64,
            num_classes: 2,
            class_separation: 0.3,
            descriptor_informativeness: 0.8,
            group_sizes: vec![7, 8, 7, 8, 7, 7],
            corpus_size: 1000,
            test_size: 500,
            valid_size: 200,
            noise_scale: 1.0,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_classes < 2 {
            return bad(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if self.dimension < self.num_classes {
            return bad(format!(
                "cannot place {} orthogonal class directions in dimension {}",
                self.num_classes, self.dimension
            ));
        }
        if !(0.0..=1.0).contains(&self.class_separation) {
            return bad(format!("class_separation {} outside [0, 1]", self.class_separation));
        }
        if !(0.0..=1.0).contains(&self.descriptor_informativeness) {
            return bad(format!(
                "descriptor_informativeness {} outside [0, 1]",
                self.descriptor_informativeness
            ));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!("noise_scale {} must be finite and >= 0", self.noise_scale));
        }
        if self.class_separation == 0.0 && self.descriptor_informativeness == 0.0 && self.noise_scale == 0.0 {
            return bad("all-zero signal and noise produce zero vectors".into());
        }
        if self.group_sizes.is_empty() || self.group_sizes.iter().any(|m| *m < 2) {
            return bad("need at least one group and at least 2 options per group".into());
        }
        if self.corpus_size == 0 || self.test_size == 0 {
            return bad("corpus_size and test_size must be positive".into());
        }
        if self.dimension < self.num_classes + self.group_sizes.iter().sum::<usize>() {
            log::warn!(
                "dimension {} < classes + options; options will not be orthogonal to each other",
                self.dimension
            );
        }
        Ok(())
    }

    /// Reads TOML or JSON, chosen by file extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "toml") {
            toml_config(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        } else {
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
        }
    }
}

fn toml_config(text: &str) -> std::result::Result<WorldConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub labels: LabelSet,
    pub taxonomy: DescriptorTaxonomy,
    pub taxonomy_config: TaxonomyConfig,
    pub rules: RuleTable,
    /// Validation then test records, each carrying its oracle label.
    pub records: Vec<AudioRecord>,
    pub corpus: Vec<RetrievalCorpusEntry>,
}

fn class_name(c: usize) -> String {
    format!("class_{c}")
}

fn group_id(k: usize) -> String {
    format!("group_{k}")
}

fn option_text(k: usize, m: usize) -> String {
    format!("group_{k} option_{m}")
}

fn axis(dim: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

/// Labeled substream of the world seed.
fn stream(seed: u64, label: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label);
    rng
}

const STREAM_OPTIONS: u64 = 1;
const STREAM_PROTOTYPES: u64 = 2;
const STREAM_VALID: u64 = 3;
const STREAM_TEST: u64 = 4;
const STREAM_CORPUS: u64 = 5;
/// Substream for ablation mask seeds derived from a run seed.
pub const STREAM_MASKS: u64 = 6;

/// `n` seeds drawn from a labeled substream of `seed`.
pub fn substream_seeds(seed: u64, label: u64, n: usize) -> Vec<u64> {
    let mut rng = stream(seed, label);
    (0..n).map(|_| rng.next_u64()).collect()
}

struct Geometry {
    class_dirs: Vec<Vec<f64>>,
    options: Vec<Vec<Vec<f64>>>,
    prototypes: Vec<Vec<usize>>,
}

impl Geometry {
    fn new(cfg: &WorldConfig) -> Result<Self> {
        let d = cfg.dimension;
        let class_dirs: Vec<Vec<f64>> = (0..cfg.num_classes).map(|c| axis(d, c)).collect();

        let total_options: usize = cfg.group_sizes.iter().sum();
        let mut rng = stream(cfg.seed, STREAM_OPTIONS);
        let mut next_axis = cfg.num_classes;
        let options = cfg
            .group_sizes
            .iter()
            .map(|&m| {
                (0..m)
                    .map(|_| {
                        if cfg.num_classes + total_options <= d {
                            next_axis += 1;
                            Ok(axis(d, next_axis - 1))
                        } else {
                            random_option(&mut rng, d, cfg.num_classes)
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;

        let mut rng = stream(cfg.seed, STREAM_PROTOTYPES);
        let mut prototypes = vec![Vec::with_capacity(cfg.group_sizes.len()); cfg.num_classes];
        for &m in &cfg.group_sizes {
            let mut perm: Vec<usize> = (0..m).collect();
            perm.shuffle(&mut rng);
            for (c, proto) in prototypes.iter_mut().enumerate() {
                proto.push(perm[c % m]);
            }
        }
        Ok(Self {
            class_dirs,
            options,
            prototypes,
        })
    }

    fn sample(&self, cfg: &WorldConfig, class: usize, rng: &mut ChaCha8Rng) -> Result<EmbeddingVector> {
        let d = cfg.dimension;
        let s = cfg.class_separation;
        let q = cfg.descriptor_informativeness;
        let k = self.prototypes[class].len() as f64;
        let mut v: Vec<f64> = self.class_dirs[class].iter().map(|x| s * x).collect();
        for (group, &opt) in self.prototypes[class].iter().enumerate() {
            for (vi, oi) in v.iter_mut().zip(&self.options[group][opt]) {
                *vi += q * oi / k;
            }
        }
        let scale = cfg.noise_scale / (d as f64).sqrt();
        for vi in v.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *vi += scale * z;
        }
        EmbeddingVector::normalize(&v)
    }
}

/// Gaussian direction orthogonal to the first `skip` axes.
fn random_option(rng: &mut ChaCha8Rng, dim: usize, skip: usize) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    if skip < dim {
        v[..skip].iter_mut().for_each(|x| *x = 0.0);
    }
    Ok(EmbeddingVector::normalize(&v)?.as_slice().to_vec())
}

pub fn generate_world(cfg: &WorldConfig) -> Result<World> {
    cfg.validate()?;
    let geo = Geometry::new(cfg)?;
    let class_names: Vec<String> = (0..cfg.num_classes).map(class_name).collect();

    let labels = LabelSet::new(
        cfg.task_id.clone(),
        class_names.clone(),
        geo.class_dirs
            .iter()
            .map(|v| EmbeddingVector::from_unit(v.clone()))
            .collect(),
    )?;

    let groups = cfg
        .group_sizes
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            DescriptorGroup::new(
                group_id(k),
                (0..m).map(|o| option_text(k, o)).collect(),
                geo.options[k]
                    .iter()
                    .map(|v| EmbeddingVector::from_unit(v.clone()))
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let taxonomy = DescriptorTaxonomy::new(groups)?;

    let prototypes: BTreeMap<String, BTreeMap<String, String>> = class_names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let row = geo.prototypes[c]
                .iter()
                .enumerate()
                .map(|(k, &o)| (group_id(k), option_text(k, o)))
                .collect();
            (name.clone(), row)
        })
        .collect();
    let taxonomy_config = TaxonomyConfig {
        groups: taxonomy
            .groups
            .iter()
            .map(|g| GroupConfig {
                id: g.group_id.clone(),
                options: g.option_texts.clone(),
            })
            .collect(),
        tasks: BTreeMap::from([(
            cfg.task_id.clone(),
            TaskRules {
                classes: class_names.clone(),
                prototypes,
            },
        )]),
    };
    let rules = RuleTable::from_config(&cfg.task_id, taxonomy_config.task(&cfg.task_id)?, &taxonomy)?;

    let mut records = Vec::with_capacity(cfg.valid_size + cfg.test_size);
    for (split, size, label) in [
        (Split::Valid, cfg.valid_size, STREAM_VALID),
        (Split::Test, cfg.test_size, STREAM_TEST),
    ] {
        let mut rng = stream(cfg.seed, label);
        for i in 0..size {
            let class = rng.random_range(0..cfg.num_classes);
            records.push(AudioRecord {
                id: format!("{split}-{i:05}"),
                split,
                label: Some(class_names[class].clone()),
                embedding: geo.sample(cfg, class, &mut rng)?,
            });
        }
    }

    let mut rng = stream(cfg.seed, STREAM_CORPUS);
    let corpus = (0..cfg.corpus_size)
        .map(|i| {
            let class = rng.random_range(0..cfg.num_classes);
            let summary: Vec<String> = geo.prototypes[class]
                .iter()
                .enumerate()
                .map(|(k, &o)| format!("{}: {}", group_id(k), option_text(k, o)))
                .collect();
            Ok(RetrievalCorpusEntry {
                id: format!("corpus-{i:05}"),
                embedding: geo.sample(cfg, class, &mut rng)?,
                report: format!("label={}; {}", class_names[class], summary.join("; ")),
                label: Some(class_names[class].clone()),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(World {
        config: cfg.clone(),
        labels,
        taxonomy,
        taxonomy_config,
        rules,
        records,
        corpus,
    })
}

impl World {
    pub fn task_assets(&self) -> Result<TaskAssets> {
        TaskAssets::new(
            self.labels.clone(),
            self.taxonomy.clone(),
            self.rules.clone(),
            RetrievalIndex::new(self.corpus.clone())?,
        )
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &AudioRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// `(id, embedding)` pairs of one split.
    pub fn samples(&self, split: Split) -> Vec<(String, EmbeddingVector)> {
        self.split(split)
            .map(|r| (r.id.clone(), r.embedding.clone()))
            .collect()
    }

    /// Oracle class indices of one split, aligned with [`World::samples`].
    pub fn oracle_labels(&self, split: Split) -> Vec<usize> {
        self.split(split)
            .map(|r| {
                r.label
                    .as_deref()
                    .and_then(|l| self.labels.index_of(l))
                    .expect("world records carry known labels")
            })
            .collect()
    }
}

/// Where an exported world lives on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldLayout {
    pub root: PathBuf,
    pub labels: PathBuf,
    pub templates: PathBuf,
    pub audio: PathBuf,
    pub corpus: PathBuf,
    pub taxonomy: PathBuf,
}

impl WorldLayout {
    pub fn at(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        Self {
            labels: root.join("labels"),
            templates: root.join("templates"),
            audio: root.join("audio"),
            corpus: root.join("corpus"),
            taxonomy: root.join(TAXONOMY_FILE),
            root,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportedWorld {
    pub layout: WorldLayout,
    pub labels: CorpusManifest,
    pub templates: CorpusManifest,
    pub audio: CorpusManifest,
    pub corpus: CorpusManifest,
}

pub fn export_world(world: &World, out_dir: impl AsRef<Path>) -> Result<ExportedWorld> {
    let layout = WorldLayout::at(out_dir.as_ref());
    fs::create_dir_all(&layout.root).map_err(|e| Error::io(&layout.root, e))?;

    let labels: Vec<StoredRecord> = world
        .labels
        .class_names
        .iter()
        .zip(&world.labels.label_embeddings)
        .map(|(name, e)| StoredRecord::new(name.clone(), e.clone()))
        .collect();
    let templates: Vec<StoredRecord> = world
        .taxonomy
        .groups
        .iter()
        .flat_map(|g| g.option_texts.iter().zip(&g.option_embeddings))
        .map(|(text, e)| StoredRecord::new(text.clone(), e.clone()))
        .collect();
    let audio: Vec<StoredRecord> = world
        .records
        .iter()
        .map(|r| StoredRecord {
            id: r.id.clone(),
            split: Some(r.split),
            label: r.label.clone(),
            report: None,
            embedding: r.embedding.clone(),
        })
        .collect();
    let corpus: Vec<StoredRecord> = world
        .corpus
        .iter()
        .map(|r| StoredRecord {
            id: r.id.clone(),
            split: Some(Split::Train),
            label: r.label.clone(),
            report: Some(r.report.clone()),
            embedding: r.embedding.clone(),
        })
        .collect();

    let exported = ExportedWorld {
        labels: save_corpus(&labels, &layout.labels)?,
        templates: save_corpus(&templates, &layout.templates)?,
        audio: save_corpus(&audio, &layout.audio)?,
        corpus: save_corpus(&corpus, &layout.corpus)?,
        layout: layout.clone(),
    };
    write_json(&layout.taxonomy, &world.taxonomy_config)?;
    write_json(&layout.root.join(WORLD_CONFIG_FILE), &world.config)?;
    Ok(exported)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
