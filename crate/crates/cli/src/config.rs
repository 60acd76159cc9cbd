//! Run configuration: flags override the config file, which overrides defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use triage_core::llm::{BackendSpec, HttpBackendConfig, PromptMode};
use triage_core::router::{CostModel, RoutingConfig};
use triage_core::workspace::TaskPaths;

use crate::{CliError, CommonArgs};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub backend: Option<String>,
    pub task_id: Option<String>,
    pub paths: PathsSection,
    pub routing: RoutingSection,
    pub cost: CostSection,
    pub http: Option<HttpBackendConfig>,
    pub service: ServiceSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub world: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub audio: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingSection {
    pub tau_l: Option<f64>,
    pub tau_m: Option<f64>,
    pub depth: Option<usize>,
    pub budget: Option<u32>,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub prompt_mode: Option<PromptMode>,
    pub max_retries: Option<u32>,
    pub base_delay_ms: Option<u64>,
    pub mask: Option<Vec<bool>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSection {
    pub t_l: Option<f64>,
    pub t_m: Option<f64>,
    pub t_h: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub bind: Option<String>,
}

/// Parses TOML, or JSON when the extension is `.json`.
pub fn parse_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Validation(format!("invalid config {}: {e}", path.display())))
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub parallelism: usize,
    pub backend: BackendSpec,
    pub http: Option<HttpBackendConfig>,
    pub task_id: Option<String>,
    pub paths: Option<TaskPaths>,
    pub out: Option<PathBuf>,
    pub routing: RoutingConfig,
    pub cost: CostModel,
    pub bind: String,
}

impl Settings {
    pub fn resolve(args: &CommonArgs) -> Result<Self, CliError> {
        let (file, base) = match &args.config {
            Some(p) => (parse_file::<FileConfig>(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
            None => (FileConfig::default(), PathBuf::new()),
        };
        // relative paths in the file are relative to the file
        let rel = |p: &Option<PathBuf>| p.as_ref().map(|p| base.join(p));

        let mut routing = RoutingConfig::default();
        let r = &file.routing;
        routing.tau_l = args.tau_l.or(r.tau_l).unwrap_or(routing.tau_l);
        routing.tau_m = args.tau_m.or(r.tau_m).unwrap_or(routing.tau_m);
        routing.mask = r.mask.clone();
        let h = &mut routing.tier_h;
        h.depth = args.depth.or(r.depth).unwrap_or(h.depth);
        h.budget = args.budget.or(r.budget).unwrap_or(h.budget);
        h.temperature = r.temperature.unwrap_or(h.temperature);
        h.max_output_tokens = r.max_output_tokens.unwrap_or(h.max_output_tokens);
        h.prompt_mode = r.prompt_mode.unwrap_or(h.prompt_mode);
        h.retry.max_retries = r.max_retries.unwrap_or(h.retry.max_retries);
        h.retry.base_delay_ms = r.base_delay_ms.unwrap_or(h.retry.base_delay_ms);
        routing.validate()?;

        let defaults = CostModel::default();
        let cost = CostModel {
            t_l: file.cost.t_l.unwrap_or(defaults.t_l),
            t_m: file.cost.t_m.unwrap_or(defaults.t_m),
            t_h: file.cost.t_h.unwrap_or(defaults.t_h),
        };
        for w in cost.warnings() {
            log::warn!("cost model: {w}");
        }

        let backend_text = args.backend.clone().or(file.backend).unwrap_or_else(|| "mock:majority".into());
        let backend: BackendSpec = backend_text.parse()?;

        let world = args.world.clone().or_else(|| rel(&file.paths.world));
        let pick = |flag: &Option<PathBuf>, file_path: &Option<PathBuf>, from_world: Option<PathBuf>| {
            flag.clone().or_else(|| rel(file_path)).or(from_world)
        };
        let w = world.as_ref().map(TaskPaths::from_world);
        let labels = pick(&args.labels, &file.paths.labels, w.as_ref().map(|w| w.labels.clone()));
        let templates = pick(&args.templates, &file.paths.templates, w.as_ref().map(|w| w.templates.clone()));
        let taxonomy = pick(&args.taxonomy, &file.paths.taxonomy, w.as_ref().map(|w| w.taxonomy.clone()));
        let corpus = pick(&args.corpus, &file.paths.corpus, w.as_ref().map(|w| w.corpus.clone()));
        let audio = pick(&args.audio, &file.paths.audio, w.as_ref().map(|w| w.audio.clone()));
        let paths = match (labels, templates, taxonomy, corpus, audio) {
            (Some(labels), Some(templates), Some(taxonomy), Some(corpus), Some(audio)) => {
                Some(TaskPaths { labels, templates, taxonomy, corpus, audio })
            }
            (None, None, None, None, None) => None,
            _ => {
                return Err(CliError::Validation(
                    "task inputs incomplete: pass --world or all of --labels --templates --taxonomy --corpus --audio".into(),
                ))
            }
        };

        let parallelism = args.parallelism.or(file.parallelism).unwrap_or(1);
        if parallelism == 0 {
            return Err(CliError::Validation("--parallelism must be at least 1".into()));
        }

        Ok(Self {
            seed: args.seed.or(file.seed).unwrap_or(0),
            parallelism,
            backend,
            http: file.http,
            task_id: args.task.clone().or(file.task_id),
            paths,
            out: args.out.clone().or_else(|| rel(&file.paths.out)),
            routing,
            cost,
            bind: file.service.bind.unwrap_or_else(|| "127.0.0.1:8080".into()),
        })
    }

    pub fn task_paths(&self) -> Result<&TaskPaths, CliError> {
        self.paths
            .as_ref()
            .ok_or_else(|| CliError::Validation("no task inputs: pass --world or explicit manifest paths".into()))
    }
}
