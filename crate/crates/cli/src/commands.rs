use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use triage_core::ablation::{ablate_depth, ablate_masking, sweep_tau_l, Cohort, DepthRow, MaskRow, TauRow};
use triage_core::artifacts::{evaluate_run, write_transcript, EvalReport, RunArtifacts, OUTCOMES_FILE, RUN_LOG_FILE, TRANSCRIPT_FILE};
use triage_core::eval::{select_tau_m, SweepResult, TAU_M_GRID};
use triage_core::llm::LlmBackend;
use triage_core::report;
use triage_core::router::{route_batch, RoutingConfig};
use triage_core::store::{load_corpus, save_corpus, EmbeddingVector, Split};
use triage_core::workspace::{load_task, LoadedTask};
use triage_core::world::{export_world, generate_world, substream_seeds, WorldConfig, STREAM_MASKS};
use triage_service::ServiceState;

use crate::config::{parse_file, Settings};
use crate::{CliError, Command, CommonArgs};

type CliResult<T = ()> = Result<T, CliError>;
type Labeled = (Vec<(String, EmbeddingVector)>, Vec<usize>);

pub const EVAL_FILE: &str = "eval";
pub const TAU_L_FILE: &str = "sweep_tau_l";
pub const TAU_M_FILE: &str = "tau_m_selection";
pub const MASK_FILE: &str = "ablate_mask";
pub const DEPTH_FILE: &str = "ablate_depth";

/// JSON envelope for ablation and sweep tables.
#[derive(Debug, Serialize, Deserialize)]
struct Table<T> {
    task_id: String,
    config: RoutingConfig,
    seed: u64,
    rows: T,
}

pub fn dispatch(command: Command, args: &CommonArgs) -> CliResult {
    match command {
        Command::GenWorld => return gen_world(args),
        Command::Ingest { manifests } => return ingest(&manifests, args.out.as_deref()),
        Command::Report { run } => return render_run(&run, args.out.as_deref().unwrap_or(&run)),
        _ => {}
    }
    let settings = Settings::resolve(args)?;
    match command {
        Command::Route { split } => route(&settings, parse_split(&split)?),
        Command::Eval { outcomes } => eval(&outcomes, settings.out.as_deref()),
        Command::SweepTau { taus, select_tau_m, tau_m_grid } => {
            sweep(&settings, &taus, select_tau_m, tau_m_grid.as_deref().unwrap_or(&TAU_M_GRID))
        }
        Command::AblateMask { rates, repeats } => mask(&settings, &rates, repeats),
        Command::AblateDepth { depths } => depth(&settings, &depths),
        Command::Serve { bind } => serve(&settings, bind.as_deref().unwrap_or(&settings.bind)),
        Command::GenWorld | Command::Ingest { .. } | Command::Report { .. } => unreachable!(),
    }
}

fn parse_split(s: &str) -> CliResult<Split> {
    match s {
        "train" => Ok(Split::Train),
        "valid" => Ok(Split::Valid),
        "test" => Ok(Split::Test),
        other => Err(CliError::Validation(format!("unknown split {other:?}"))),
    }
}

fn runtime(context: &str, path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{context} {}: {e}", path.display()))
}

fn ensure_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| runtime("cannot create", dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| runtime("cannot write", path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| runtime("cannot encode", path, e))?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("invalid {}: {e}", path.display())))
}

/// Writes `<stem>.json`, `<stem>.txt` and `<stem>.csv` and prints the text.
fn emit<T: Serialize>(dir: &Path, stem: &str, json: &T, text: &str, csv: &str) -> CliResult {
    ensure_dir(dir)?;
    write_json(&dir.join(format!("{stem}.json")), json)?;
    write_text(&dir.join(format!("{stem}.txt")), text)?;
    write_text(&dir.join(format!("{stem}.csv")), csv)?;
    print!("{text}");
    Ok(())
}

fn results_dir(settings: &Settings) -> PathBuf {
    settings.out.clone().unwrap_or_else(|| PathBuf::from("results"))
}

fn gen_world(args: &CommonArgs) -> CliResult {
    let mut cfg = match &args.config {
        Some(p) => parse_file::<WorldConfig>(p)?,
        None => WorldConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args.out.clone().ok_or_else(|| CliError::Validation("gen-world needs --out".into()))?;
    let world = generate_world(&cfg)?;
    let exported = export_world(&world, &out)?;
    println!(
        "world {} -> {} ({} audio records, {} corpus entries, D={})",
        cfg.task_id,
        out.display(),
        exported.audio.record_count,
        exported.corpus.record_count,
        exported.audio.dimension
    );
    Ok(())
}

fn ingest(manifests: &[PathBuf], out: Option<&Path>) -> CliResult {
    if out.is_some() && manifests.len() != 1 {
        return Err(CliError::Validation("--out needs exactly one manifest".into()));
    }
    for m in manifests {
        if !m.exists() {
            return Err(CliError::Validation(format!("path does not exist: {}", m.display())));
        }
        let corpus = load_corpus(m)?;
        println!(
            "{}: {} records, D={}, checksum ok",
            m.display(),
            corpus.manifest.record_count,
            corpus.manifest.dimension
        );
        if let Some(dir) = out {
            let manifest = save_corpus(&corpus.records, dir)?;
            println!("normalized copy -> {} ({})", dir.display(), manifest.checksum_sha256);
        }
    }
    Ok(())
}

fn load(settings: &Settings) -> CliResult<LoadedTask> {
    Ok(load_task(settings.task_paths()?, settings.task_id.as_deref())?)
}

fn backend(settings: &Settings) -> CliResult<Arc<dyn LlmBackend>> {
    Ok(settings.backend.build(settings.http.as_ref())?)
}

/// Samples and class indices of a split; every sample must be labeled.
fn labeled(task: &LoadedTask, split: Split) -> CliResult<Labeled> {
    let (samples, labels) = task.split(split);
    if samples.is_empty() {
        return Err(CliError::Validation(format!("split {split} is empty")));
    }
    let labels = labels
        .into_iter()
        .zip(&samples)
        .map(|(l, (id, _))| l.ok_or_else(|| CliError::Validation(format!("record {id} has no label"))))
        .collect::<CliResult<Vec<_>>>()?;
    Ok((samples, labels))
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

fn route(settings: &Settings, split: Split) -> CliResult {
    let task = load(settings)?;
    let backend = backend(settings)?;
    let (samples, _) = task.split(split);
    if samples.is_empty() {
        return Err(CliError::Validation(format!("split {split} is empty")));
    }
    let started_at = unix_ms();
    let clock = Instant::now();
    let batch = route_batch(&samples, &task.assets, &settings.routing, &settings.cost, backend.as_ref(), settings.parallelism)?;
    let wall_ms = clock.elapsed().as_secs_f64() * 1e3;

    let truth = |id: &str| task.record(id).and_then(|r| r.label.clone());
    let run = RunArtifacts::from_batch(&batch, &task.assets.labels, truth, &settings.routing, &settings.cost, &settings.backend.to_string());
    let out = settings.out.clone().unwrap_or_else(|| PathBuf::from("run"));
    ensure_dir(&out)?;
    run.write(out.join(OUTCOMES_FILE))?;
    write_transcript(out.join(TRANSCRIPT_FILE), &run.transcript())?;
    let mut log = format!(
        "started_unix_ms={started_at}\nwall_ms={wall_ms:.3}\nparallelism={}\nsamples={}\nerrors={}\n",
        settings.parallelism,
        samples.len(),
        batch.errors.len()
    );
    for o in &batch.outcomes {
        log.push_str(&format!("sample {} tier {} elapsed_ms={:.3}\n", o.sample_id, o.final_tier, o.elapsed_ms));
    }
    write_text(&out.join(RUN_LOG_FILE), &log)?;

    for e in &batch.errors {
        eprintln!("warning: {e}");
    }
    println!("{}", serde_json::to_string_pretty(&run.summary.stats).unwrap_or_default());
    Ok(())
}

fn eval(outcomes: &Path, out: Option<&Path>) -> CliResult {
    if !outcomes.exists() {
        return Err(CliError::Validation(format!("path does not exist: {}", outcomes.display())));
    }
    let run = RunArtifacts::read(outcomes)?;
    let report = evaluate_run(&run)?;
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| outcomes.parent().map(Path::to_path_buf).unwrap_or_default());
    emit(&dir, EVAL_FILE, &report, &report::eval_text(&report), &report::stratified_csv(&report.stratified)?)
}

fn sweep(settings: &Settings, taus: &[f64], select: bool, grid: &[f64]) -> CliResult {
    let task = load(settings)?;
    let backend = backend(settings)?;
    let out = results_dir(settings);
    let mut routing = settings.routing.clone();
    if select {
        let (samples, labels) = labeled(&task, Split::Valid)?;
        let batch = route_batch(&samples, &task.assets, &routing, &settings.cost, backend.as_ref(), settings.parallelism)?;
        let kept: Vec<usize> = labels
            .iter()
            .zip(&samples)
            .filter(|(_, (id, _))| batch.outcomes.iter().any(|o| &o.sample_id == id))
            .map(|(l, _)| *l)
            .collect();
        let result = select_tau_m(&batch.outcomes, &kept, task.assets.labels.len(), grid)?;
        routing.tau_m = result.selected;
        let table = Table { task_id: task.task_id.clone(), config: routing.clone(), seed: settings.seed, rows: result };
        emit(&out, TAU_M_FILE, &table, &report::sweep_text(&table.rows), &report::sweep_csv(&table.rows)?)?;
    }
    let (samples, labels) = labeled(&task, Split::Test)?;
    let cohort = Cohort { assets: &task.assets, samples: &samples, labels: &labels };
    let rows = sweep_tau_l(cohort, taus, &routing, &settings.cost, backend.as_ref(), settings.parallelism)?;
    let table = Table { task_id: task.task_id.clone(), config: routing, seed: settings.seed, rows };
    emit(&out, TAU_L_FILE, &table, &report::tau_text(&table.rows), &report::tau_csv(&table.rows)?)
}

fn mask(settings: &Settings, rates: &[f64], repeats: usize) -> CliResult {
    if repeats == 0 {
        return Err(CliError::Validation("--repeats must be at least 1".into()));
    }
    let task = load(settings)?;
    let (samples, labels) = labeled(&task, Split::Test)?;
    let cohort = Cohort { assets: &task.assets, samples: &samples, labels: &labels };
    let seeds = substream_seeds(settings.seed, STREAM_MASKS, repeats);
    let rows = ablate_masking(cohort, rates, &seeds)?;
    let table = Table { task_id: task.task_id.clone(), config: settings.routing.clone(), seed: settings.seed, rows };
    emit(&results_dir(settings), MASK_FILE, &table, &report::mask_text(&table.rows), &report::mask_csv(&table.rows)?)
}

fn depth(settings: &Settings, depths: &[usize]) -> CliResult {
    let task = load(settings)?;
    let backend = backend(settings)?;
    let (samples, labels) = labeled(&task, Split::Test)?;
    let cohort = Cohort { assets: &task.assets, samples: &samples, labels: &labels };
    let rows = ablate_depth(cohort, depths, &settings.routing.tier_h, settings.routing.mask.as_deref(), backend.as_ref())?;
    let table = Table { task_id: task.task_id.clone(), config: settings.routing.clone(), seed: settings.seed, rows };
    emit(&results_dir(settings), DEPTH_FILE, &table, &report::depth_text(&table.rows), &report::depth_csv(&table.rows)?)
}

fn render_run(run: &Path, out: &Path) -> CliResult {
    if !run.is_dir() {
        return Err(CliError::Validation(format!("not a directory: {}", run.display())));
    }
    let path = |stem: &str| run.join(format!("{stem}.json"));
    let mut found = 0;
    if path(EVAL_FILE).exists() {
        let r: EvalReport = read_json(&path(EVAL_FILE))?;
        emit(out, EVAL_FILE, &r, &report::eval_text(&r), &report::stratified_csv(&r.stratified)?)?;
        found += 1;
    }
    if path(TAU_M_FILE).exists() {
        let t: Table<SweepResult> = read_json(&path(TAU_M_FILE))?;
        emit(out, TAU_M_FILE, &t, &report::sweep_text(&t.rows), &report::sweep_csv(&t.rows)?)?;
        found += 1;
    }
    if path(TAU_L_FILE).exists() {
        let t: Table<Vec<TauRow>> = read_json(&path(TAU_L_FILE))?;
        emit(out, TAU_L_FILE, &t, &report::tau_text(&t.rows), &report::tau_csv(&t.rows)?)?;
        found += 1;
    }
    if path(MASK_FILE).exists() {
        let t: Table<Vec<MaskRow>> = read_json(&path(MASK_FILE))?;
        emit(out, MASK_FILE, &t, &report::mask_text(&t.rows), &report::mask_csv(&t.rows)?)?;
        found += 1;
    }
    if path(DEPTH_FILE).exists() {
        let t: Table<Vec<DepthRow>> = read_json(&path(DEPTH_FILE))?;
        emit(out, DEPTH_FILE, &t, &report::depth_text(&t.rows), &report::depth_csv(&t.rows)?)?;
        found += 1;
    }
    if found == 0 {
        return Err(CliError::Validation(format!("no report artifacts in {}", run.display())));
    }
    Ok(())
}

fn serve(settings: &Settings, bind: &str) -> CliResult {
    let task = load(settings)?;
    let backend = backend(settings)?;
    let state = ServiceState::new(task, settings.routing.clone(), settings.cost, backend)?;
    let addr = triage_service::spawn(bind, Arc::new(state)).map_err(|e| CliError::Runtime(format!("cannot bind {bind}: {e}")))?;
    println!("listening on http://{addr}");
    loop {
        std::thread::park();
    }
}
