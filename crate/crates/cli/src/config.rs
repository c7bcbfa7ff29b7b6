//! The run configuration file.

use std::path::{Path, PathBuf};

use plansynth_core::dataset_out::ExportConfig;
use plansynth_core::elicitation::ElicitConfig;
use plansynth_core::llm_client::HttpConfig;
use plansynth_core::scenario_gen::GenConfig;
use plansynth_core::Dialect;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_COPY: &str = "run_config.toml";

/// Where completions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum BackendSpec {
    /// Seeded template generator (scenarios only).
    Procedural,
    /// Reference planner with access to the hidden environment.
    Oracle,
    Http(HttpConfig),
    /// Recorded transcripts: a run directory or a `.jsonl` file.
    Replay {
        transcripts: PathBuf,
        #[serde(default = "yes")]
        strict: bool,
    },
    /// Sends the same text every turn.
    Repeat {
        text: String,
    },
    /// Replies with an empty string every turn.
    Null,
}

fn yes() -> bool {
    true
}

impl BackendSpec {
    pub fn name(&self) -> &'static str {
        match self {
            BackendSpec::Procedural => "procedural",
            BackendSpec::Oracle => "oracle",
            BackendSpec::Http(_) => "http",
            BackendSpec::Replay { .. } => "replay",
            BackendSpec::Repeat { .. } => "repeat",
            BackendSpec::Null => "null",
        }
    }

    /// Parses a `--backend` value: `procedural`, `oracle`, `null`,
    /// `http:<base_url>`, `replay:<path>`, or `repeat:<text>`.
    pub fn from_flag(s: &str) -> Result<Self, CliError> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) if matches!(k, "http" | "replay" | "repeat") => (k, Some(a)),
            _ => (s, None),
        };
        let need = |what: &str| {
            arg.filter(|a| !a.is_empty())
                .map(str::to_string)
                .ok_or_else(|| CliError::config("--backend", format!("{kind} needs a {what}, as in {kind}:<{what}>")))
        };
        Ok(match kind {
            "procedural" => BackendSpec::Procedural,
            "oracle" => BackendSpec::Oracle,
            "null" => BackendSpec::Null,
            "http" => BackendSpec::Http(HttpConfig { base_url: need("url")?, ..HttpConfig::default() }),
            "replay" => BackendSpec::Replay { transcripts: need("path")?.into(), strict: true },
            "repeat" => BackendSpec::Repeat { text: need("text")? },
            other => {
                return Err(CliError::config(
                    "--backend",
                    format!("unknown backend {other:?} (expected procedural, oracle, null, http:, replay:, repeat:)"),
                ))
            }
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Directory of scenario files. Defaults to the run's generated scenarios.
    pub suite: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchTarget {
    /// The bundled mock server, with server-side delay injection.
    #[default]
    Mock,
    /// The configured planner backend, with a client-side delay shim.
    Planner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub target: BenchTarget,
    pub n_queries: usize,
    pub delays_ms: Vec<u64>,
    /// Mock server processing time per request.
    pub service_ms: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { target: BenchTarget::Mock, n_queries: 60, delays_ms: vec![0, 200], service_ms: 50 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Also run the latency benchmark at the end of `pipeline`.
    pub bench: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dialect: Dialect,
    pub base_seed: u64,
    pub output_root: PathBuf,
    #[serde(default = "default_run_id")]
    pub run_id: String,
    #[serde(default = "default_n_scenarios")]
    pub n_scenarios: usize,
    pub generator: BackendSpec,
    pub planner: BackendSpec,
    /// `generation.dialect` always follows the top-level `dialect`.
    #[serde(default)]
    pub generation: GenConfig,
    #[serde(default)]
    pub elicitation: ElicitConfig,
    #[serde(default)]
    pub export: ExportConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

fn default_run_id() -> String {
    "main".to_string()
}

fn default_n_scenarios() -> usize {
    10
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dialect: Dialect::Spine,
            base_seed: 0,
            output_root: PathBuf::from("runs"),
            run_id: default_run_id(),
            n_scenarios: default_n_scenarios(),
            generator: BackendSpec::Procedural,
            planner: BackendSpec::Oracle,
            generation: GenConfig::default(),
            elicitation: ElicitConfig::default(),
            export: ExportConfig::default(),
            eval: EvalConfig::default(),
            bench: BenchConfig::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

/// Command-line overrides. Flags win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_scenarios: Option<usize>,
    pub generator: Option<BackendSpec>,
    pub planner: Option<BackendSpec>,
    pub output_root: Option<PathBuf>,
    pub run_id: Option<String>,
    pub no_masking: bool,
    pub no_validation: bool,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::config(origin, e.to_string()))?;
        Ok(cfg.normalized())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(&origin, e.to_string()))?;
        Self::parse(&text, &origin)
    }

    fn normalized(mut self) -> Self {
        self.generation.dialect = self.dialect;
        self
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        if let Some(s) = o.seed {
            self.base_seed = s;
        }
        if let Some(n) = o.n_scenarios {
            self.n_scenarios = n;
        }
        if let Some(g) = &o.generator {
            self.generator = g.clone();
        }
        if let Some(p) = &o.planner {
            self.planner = p.clone();
        }
        if let Some(out) = &o.output_root {
            self.output_root = out.clone();
        }
        if let Some(r) = &o.run_id {
            self.run_id = r.clone();
        }
        self.elicitation.ablate_masking |= o.no_masking;
        self.elicitation.ablate_validation |= o.no_validation;
        self.normalized()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.generation.validate().map_err(|m| CliError::config("generation", m))?;
        self.elicitation.validate().map_err(|m| CliError::config("elicitation", m))?;
        self.export.validate().map_err(|m| CliError::config("export", m))?;
        if !matches!(
            self.generator,
            BackendSpec::Procedural
                | BackendSpec::Http(_)
                | BackendSpec::Replay { .. }
                | BackendSpec::Repeat { .. }
                | BackendSpec::Null
        ) {
            return Err(CliError::config(
                "generator.backend",
                format!("{} cannot generate scenarios", self.generator.name()),
            ));
        }
        if self.planner == BackendSpec::Procedural {
            return Err(CliError::config("planner.backend", "procedural is a scenario generator, not a planner"));
        }
        if self.n_scenarios == 0 {
            return Err(CliError::config("n_scenarios", "must be at least 1"));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) || self.run_id == ".." {
            return Err(CliError::config("run_id", format!("{:?} is not a valid directory name", self.run_id)));
        }
        if self.bench.n_queries == 0 || self.bench.delays_ms.is_empty() {
            return Err(CliError::config("bench", "n_queries and delays_ms must be non-empty"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn scenarios_dir(&self) -> PathBuf {
        self.output_root.join("scenarios")
    }

    pub fn episodes_dir(&self) -> PathBuf {
        self.output_root.join("episodes").join(&self.run_id)
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.output_root.join("dataset")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.output_root.join("eval")
    }

    pub fn bench_dir(&self) -> PathBuf {
        self.output_root.join("bench")
    }

    pub fn suite_dir(&self) -> PathBuf {
        self.eval.suite.clone().unwrap_or_else(|| self.scenarios_dir())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
dialect = "spine"
base_seed = 4
output_root = "out"
generator = { backend = "procedural" }
planner = { backend = "oracle" }
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::parse(MINIMAL, "test").unwrap();
        assert_eq!((c.n_scenarios, c.run_id.as_str()), (10, "main"));
        assert_eq!(c.generation.env_size, 20);
        c.validate().unwrap();
        assert_eq!(RunConfig::parse(&c.to_toml(), "copy").unwrap(), c);
    }

    #[test]
    fn missing_and_unknown_keys_are_named() {
        let e = RunConfig::parse(&MINIMAL.replace("base_seed = 4\n", ""), "f.toml").unwrap_err();
        assert!(e.to_string().contains("base_seed"), "{e}");
        let e = RunConfig::parse(&format!("{MINIMAL}\n[elicitation]\nmax_iteration = 3\n"), "f.toml").unwrap_err();
        assert!(e.to_string().contains("max_iteration"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn http_backend_table() {
        let text = MINIMAL.replace(
            r#"planner = { backend = "oracle" }"#,
            "[planner]\nbackend = \"http\"\nbase_url = \"http://127.0.0.1:9/v1\"\nmodel = \"small\"\n",
        );
        let text = text.replace("generator = { backend = \"procedural\" }\n", "")
            + "\n[generator]\nbackend = \"procedural\"\n";
        let c = RunConfig::parse(&text, "t").unwrap();
        match &c.planner {
            BackendSpec::Http(h) => assert_eq!((h.model.as_str(), h.max_tokens), ("small", 1024)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flags_win() {
        let c = RunConfig::parse(MINIMAL, "t").unwrap().apply(&Overrides {
            seed: Some(9),
            planner: Some(BackendSpec::from_flag("repeat:[goto(x)]").unwrap()),
            no_masking: true,
            ..Overrides::default()
        });
        assert_eq!(c.base_seed, 9);
        assert!(c.elicitation.ablate_masking);
        assert_eq!(c.planner, BackendSpec::Repeat { text: "[goto(x)]".into() });
        assert!(BackendSpec::from_flag("replay").is_err());
        assert!(c
            .clone()
            .apply(&Overrides { planner: Some(BackendSpec::Procedural), ..Overrides::default() })
            .validate()
            .is_err());
    }
}
