//! `triage`: route, evaluate, ablate and serve.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "triage", version, about = "Confidence-gated three-tier zero-shot classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Run configuration file (TOML, or JSON by extension).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long = "tau-l", global = true)]
    pub tau_l: Option<f64>,
    #[arg(long = "tau-m", global = true)]
    pub tau_m: Option<f64>,
    /// Retrieval depth for Tier-H.
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    /// LLM calls per escalated sample.
    #[arg(long, global = true)]
    pub budget: Option<u32>,
    /// `mock:<majority|fixed:CLASS|garbage|echo_first>` or `http`.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Directory written by `gen-world`.
    #[arg(long, global = true)]
    pub world: Option<PathBuf>,
    /// Task id inside the taxonomy file.
    #[arg(long, global = true)]
    pub task: Option<String>,
    #[arg(long, global = true)]
    pub labels: Option<PathBuf>,
    #[arg(long, global = true)]
    pub templates: Option<PathBuf>,
    #[arg(long, global = true)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    pub audio: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate embedding-store manifests; with --out, write a normalized copy.
    Ingest {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
    },
    /// Generate and export a synthetic world (--config is a world config).
    GenWorld,
    /// Route a split and write outcomes, transcript and stats.
    Route {
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Evaluate an outcome file.
    Eval {
        #[arg(long)]
        outcomes: PathBuf,
    },
    /// Sweep tau_L on the test split, optionally selecting tau_M on validation first.
    SweepTau {
        #[arg(long, value_delimiter = ',', default_values_t = [0.30, 0.45, 0.60])]
        taus: Vec<f64>,
        #[arg(long)]
        select_tau_m: bool,
        #[arg(long, value_delimiter = ',')]
        tau_m_grid: Option<Vec<f64>>,
    },
    /// Tier-M-only AUROC under random descriptor masking.
    AblateMask {
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.2, 0.5])]
        rates: Vec<f64>,
        /// Maskings per rate.
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// Tier-H-only AUROC per retrieval depth.
    AblateDepth {
        #[arg(long, value_delimiter = ',', default_values_t = [1, 3, 5, 8])]
        depths: Vec<usize>,
    },
    /// Render text and CSV tables from JSON artifacts in a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<triage_core::Error> for CliError {
    fn from(e: triage_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match commands::dispatch(cli.command, &cli.common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
