//! Command-line front end: config loading, backend selection, and the
//! `generate → elicit → export → eval` stages.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Parser, Subcommand};
use plansynth_core::dataset_out::verify_dataset;
use plansynth_core::Dialect;

pub mod backends;
pub mod config;
pub mod stages;

pub use config::{BackendSpec, Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error in {path}: {message}")]
    Config { path: String, message: String },
    #[error("{stage} failed: {cause}")]
    Stage { stage: &'static str, cause: String },
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { path: path.into(), message: message.into() }
    }

    pub fn stage(stage: &'static str, cause: impl Into<String>) -> Self {
        CliError::Stage { stage, cause: cause.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Stage { .. } => 3,
        }
    }
}

/// Exit status for a run cut short by an interrupt.
pub const EXIT_INTERRUPTED: i32 = 130;
/// Exit status of `verify` when the dataset has violations.
pub const EXIT_VIOLATIONS: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "plansynth", version, about = "Synthesize and evaluate planner training data")]
pub struct Cli {
    /// Run configuration (TOML). Built-in defaults are used when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of scenarios to generate.
    #[arg(long = "n", global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub dialect: Option<Dialect>,
    /// Backend for this command: oracle, procedural, null, repeat:TEXT,
    /// replay:PATH, or http:URL. Sets the generator for `generate` and the
    /// planner otherwise.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Scenario generator for `pipeline`.
    #[arg(long, global = true)]
    pub generator: Option<String>,
    /// Show the whole environment to the planner.
    #[arg(long, global = true)]
    pub no_masking: bool,
    /// Keep timed-out and invalid episodes.
    #[arg(long, global = true)]
    pub no_validation: bool,
    /// Print the plan of work and exit.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Output root, overriding `output_root`.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub run_id: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate scenarios.
    Generate,
    /// Run the planner on every scenario task and record episodes.
    Elicit,
    /// Turn recorded episodes into train/val JSONL.
    Export,
    /// Score the planner on a scenario suite.
    Eval,
    /// Measure request latency under injected delays.
    Bench,
    /// generate, elicit, export, eval (and bench if enabled).
    Pipeline,
    /// Check a dataset JSONL file.
    Verify { path: PathBuf },
}

impl Command {
    fn stages(&self, cfg: &RunConfig) -> Vec<&'static str> {
        match self {
            Command::Generate => vec!["generate"],
            Command::Elicit => vec!["elicit"],
            Command::Export => vec!["export"],
            Command::Eval => vec!["eval"],
            Command::Bench => vec!["bench"],
            Command::Pipeline => {
                let mut v = vec!["generate", "elicit", "export", "eval"];
                if cfg.pipeline.bench {
                    v.push("bench");
                }
                v
            }
            Command::Verify { .. } => vec![],
        }
    }
}

/// The effective configuration: file (or defaults), then flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = cli.dialect {
        cfg.dialect = d;
    }
    let flag = |s: &Option<String>| s.as_deref().map(BackendSpec::from_flag).transpose();
    let backend = flag(&cli.backend)?;
    let mut o = Overrides {
        seed: cli.seed,
        n_scenarios: cli.n,
        generator: flag(&cli.generator)?,
        planner: None,
        output_root: cli.output.clone(),
        run_id: cli.run_id.clone(),
        no_masking: cli.no_masking,
        no_validation: cli.no_validation,
    };
    match cli.command {
        Command::Generate => o.generator = backend.or(o.generator),
        _ => o.planner = backend,
    }
    let cfg = cfg.apply(&o);
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the command and returns the process exit status.
pub fn run(cli: &Cli, cancel: &AtomicBool) -> Result<i32, CliError> {
    if let Command::Verify { path } = &cli.command {
        let violations =
            verify_dataset(path).map_err(|e| CliError::stage("verify", format!("{}: {e}", path.display())))?;
        for v in &violations {
            println!("{v}");
        }
        return Ok(if violations.is_empty() {
            println!("ok: {}", path.display());
            0
        } else {
            println!("{} violation(s)", violations.len());
            EXIT_VIOLATIONS
        });
    }
    let cfg = resolve_config(cli)?;
    let stages = cli.command.stages(&cfg);
    if cli.dry_run {
        for line in stages::plan(&cfg, &stages) {
            println!("{line}");
        }
        return Ok(0);
    }
    stages::write_config_copy(&cfg)?;
    for stage in stages {
        if cancel.load(Ordering::SeqCst) {
            break;
        }
        match stage {
            "generate" => drop(stages::generate(&cfg, cancel)?),
            "elicit" => drop(stages::elicit(&cfg, cancel)?),
            "export" => drop(stages::export_dataset(&cfg)?),
            "eval" => drop(stages::eval(&cfg, cancel)?),
            "bench" => drop(stages::bench(&cfg)?),
            _ => unreachable!("unknown stage {stage}"),
        }
    }
    if cancel.load(Ordering::SeqCst) {
        eprintln!("interrupted; partial results were written under {}", cfg.output_root.display());
        return Ok(EXIT_INTERRUPTED);
    }
    Ok(0)
}
