use std::path::Path;

use plansynth_core::elicitation::read_transcripts;
use plansynth_core::llm_client::{HttpBackend, NullBackend, RepeatBackend, ReplayBackend};
use plansynth_core::oracle::OracleBackend;
use plansynth_core::{ChatBackend, Dialect};

use crate::config::BackendSpec;
use crate::CliError;

/// A scenario source.
pub enum Generator {
    Procedural,
    Chat(Box<dyn ChatBackend>),
}

fn transcripts(path: &Path) -> Result<String, CliError> {
    let read = if path.is_dir() { read_transcripts(path) } else { std::fs::read_to_string(path) };
    read.map_err(|e| CliError::config(path.display().to_string(), format!("cannot read transcripts: {e}")))
}

fn chat(spec: &BackendSpec, dialect: Dialect, role: &str) -> Result<Box<dyn ChatBackend>, CliError> {
    let bad = |e: plansynth_core::LlmError| CliError::config(format!("{role}.backend"), e.to_string());
    Ok(match spec {
        BackendSpec::Oracle => Box::new(OracleBackend::new(dialect)),
        BackendSpec::Http(h) => Box::new(HttpBackend::new(h.clone()).map_err(bad)?),
        BackendSpec::Replay { transcripts: p, strict } => {
            let replay = ReplayBackend::from_jsonl(&transcripts(p)?, *strict).map_err(bad)?;
            if replay.is_empty() {
                return Err(CliError::config(p.display().to_string(), "transcript is empty"));
            }
            Box::new(replay)
        }
        BackendSpec::Repeat { text } => Box::new(RepeatBackend(text.clone())),
        BackendSpec::Null => Box::new(NullBackend),
        BackendSpec::Procedural => {
            return Err(CliError::config(format!("{role}.backend"), "procedural only generates scenarios"))
        }
    })
}

pub fn planner(spec: &BackendSpec, dialect: Dialect) -> Result<Box<dyn ChatBackend>, CliError> {
    chat(spec, dialect, "planner")
}

pub fn generator(spec: &BackendSpec, dialect: Dialect) -> Result<Generator, CliError> {
    match spec {
        BackendSpec::Procedural => Ok(Generator::Procedural),
        BackendSpec::Oracle => Err(CliError::config("generator.backend", "oracle is a planner, not a generator")),
        other => chat(other, dialect, "generator").map(Generator::Chat),
    }
}
