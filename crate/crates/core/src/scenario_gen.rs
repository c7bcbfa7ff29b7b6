//! Scenario synthesis: prompting a generator model and checking what comes
//! back, or building scenarios procedurally from a seed.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::action::{ActionCall, ActionName, Dialect};
use crate::chat::{ChatMessage, ChatMessages};
use crate::emulator::capabilities::Capabilities;
use crate::emulator::{DeltaKind, WorldState};
use crate::env_model::{
    canonical_edge, parse_environment_at, Edge, Environment, Node, ObjectSetEnv, SceneGraph, SchemaError,
    NAMED_POSITIONS,
};
use crate::goals::{GoalSpec, PlacementPredicate};
use crate::llm_client::{ChatBackend, LlmError, RequestContext};
use crate::util::{derive_seed, extract_json_array, extract_json_object};

const GEN_SPINE: &str = include_str!("../assets/prompts/generator_spine.txt");
const GEN_SAYCAN: &str = include_str!("../assets/prompts/generator_saycan.txt");
const GEN_LLM_PLANNER: &str = include_str!("../assets/prompts/generator_llm_planner.txt");
const SPINE_OBSERVATION_FORMAT: &str = include_str!("../assets/prompts/spine_observation_format.json");
const SPINE_OUTPUT_FORMAT: &str = include_str!("../assets/prompts/spine_output_format.json");
const EXAMPLE_GRAPH: &str = include_str!("../tests/fixtures/example_graph.json");

const GENERATOR_SYSTEM: &str = "You produce training scenarios for robot planners. Reply with JSON only.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Llm,
    Procedural,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: GeneratorKind,
    pub seed: u64,
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Specification {
    Fully,
    Under,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    Mapping,
    Exploration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<GoalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specification: Option<Specification>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<TaskMode>,
}

impl Task {
    pub fn text_only(text: impl Into<String>) -> Self {
        Self { text: text.into(), goal: None, specification: None, mode: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub dialect: Dialect,
    pub description: String,
    pub environment: Environment,
    pub tasks: Vec<Task>,
    pub provenance: Provenance,
}

impl Scenario {
    pub fn file_name(&self) -> String {
        format!("{}.json", self.id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes") + "\n"
    }
}

pub fn scenario_id(seed: u64, index: usize) -> String {
    format!("scenario_{seed}_{index}")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMix {
    Fully,
    Under,
    #[default]
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// Regions + objects for scene graphs, blocks for tabletop scenes,
    /// objects + receptacles for household scenes.
    pub env_size: usize,
    pub n_tasks: usize,
    pub temperature: f64,
    pub top_p: Option<f64>,
    pub max_reprompts: u32,
    pub dialect: Dialect,
    pub task_mix: TaskMix,
    /// Start a fresh conversation on each retry instead of appending the error.
    pub restart_on_reprompt: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            env_size: 20,
            n_tasks: 5,
            temperature: 1.0,
            top_p: None,
            max_reprompts: 2,
            dialect: Dialect::Spine,
            task_mix: TaskMix::Mixed,
            restart_on_reprompt: false,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.env_size < 2 {
            return Err("env_size must be at least 2".into());
        }
        if self.n_tasks < 1 {
            return Err("n_tasks must be at least 1".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err("temperature must lie in [0, 2]".into());
        }
        if let Some(p) = self.top_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err("top_p must lie in (0, 1]".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("the environment is invalid: {0}")]
    Validation(String),
    #[error("no valid scenario after {attempts} attempt(s); last error: {last}")]
    Exhausted { attempts: u32, last: Box<GenError> },
    #[error(transparent)]
    Backend(#[from] LlmError),
}

pub fn build_generation_prompt(cfg: &GenConfig) -> ChatMessages {
    let template = match cfg.dialect {
        Dialect::Spine => GEN_SPINE
            .replace("{{OBSERVATION_FORMAT}}", SPINE_OBSERVATION_FORMAT.trim())
            .replace("{{EXAMPLE_GRAPH}}", EXAMPLE_GRAPH.trim())
            .replace("{{OUTPUT_FORMAT}}", SPINE_OUTPUT_FORMAT.trim()),
        Dialect::SayCan => GEN_SAYCAN.to_string(),
        Dialect::LlmPlanner => GEN_LLM_PLANNER.to_string(),
    };
    let prompt =
        template.replace("{{SIZE}}", &cfg.env_size.to_string()).replace("{{N_TASKS}}", &cfg.n_tasks.to_string());
    ChatMessages::new(GENERATOR_SYSTEM).with(ChatMessage::user(prompt.trim_end()))
}

fn first_key<'a>(obj: &'a serde_json::Map<String, Value>, keys: &[&str]) -> Option<(&'a str, &'a Value)> {
    obj.iter().find(|(k, _)| keys.iter().any(|want| k.eq_ignore_ascii_case(want))).map(|(k, v)| (k.as_str(), v))
}

fn task_texts(obj: &serde_json::Map<String, Value>) -> Result<Vec<String>, SchemaError> {
    if let Some((key, v)) = first_key(obj, &["tasks"]) {
        let arr = v.as_array().ok_or_else(|| SchemaError::new(format!("/{key}"), "expected a list of tasks"))?;
        return arr
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let text = match t {
                    Value::String(s) => Some(s.as_str()),
                    Value::Object(o) => ["task", "description", "raw_input", "text"]
                        .iter()
                        .find_map(|k| o.get(*k).and_then(Value::as_str)),
                    _ => None,
                };
                text.map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| SchemaError::new(format!("/{key}/{i}"), "expected task text"))
            })
            .collect();
    }
    // Also accept numbered keys: task_1, task_2, ...
    let mut numbered: Vec<(u64, String)> = obj
        .iter()
        .filter_map(|(k, v)| {
            let n = k.strip_prefix("task_")?.parse::<u64>().ok()?;
            Some((n, v.as_str()?.trim().to_string()))
        })
        .collect();
    if numbered.is_empty() {
        return Err(SchemaError::new("/tasks", "missing required key"));
    }
    numbered.sort();
    Ok(numbered.into_iter().map(|(_, t)| t).collect())
}

fn check_env(env: &Environment) -> Result<(), GenError> {
    let v = env.validate();
    if v.is_empty() {
        Ok(())
    } else {
        let list: Vec<String> = v.iter().map(ToString::to_string).collect();
        Err(GenError::Validation(list.join("; ")))
    }
}

fn take_tasks(mut tasks: Vec<Task>, cfg: &GenConfig) -> Result<Vec<Task>, GenError> {
    if tasks.len() < cfg.n_tasks {
        return Err(GenError::Validation(format!("expected {} tasks but got {}", cfg.n_tasks, tasks.len())));
    }
    tasks.truncate(cfg.n_tasks);
    Ok(tasks)
}

/// Extracts and checks a generated scenario. The returned scenario has an
/// empty id and LLM provenance with zero attempts; callers fill those in.
pub fn parse_generation(raw: &str, cfg: &GenConfig) -> Result<Scenario, GenError> {
    let (description, environment, tasks) = match cfg.dialect {
        Dialect::Spine => parse_spine_generation(raw, cfg)?,
        Dialect::SayCan => parse_saycan_generation(raw)?,
        Dialect::LlmPlanner => parse_household_generation(raw)?,
    };
    check_env(&environment)?;
    Ok(Scenario {
        id: String::new(),
        dialect: cfg.dialect,
        description,
        environment,
        tasks: take_tasks(tasks, cfg)?,
        provenance: Provenance { generator: GeneratorKind::Llm, seed: 0, attempts: 0 },
    })
}

type Parts = (String, Environment, Vec<Task>);

fn parse_spine_generation(raw: &str, cfg: &GenConfig) -> Result<Parts, GenError> {
    let v = extract_json_object(raw).ok_or_else(|| SchemaError::new("/", "no JSON object found"))?;
    let obj = v.as_object().expect("extracted an object");
    let (key, env_v) = first_key(obj, &["environment", "graph", "scene_graph"])
        .ok_or_else(|| SchemaError::new("/environment", "missing required key"))?;
    let env = parse_environment_at(env_v, &format!("/{key}"))?;
    if env.as_scene_graph().is_none() {
        return Err(SchemaError::new(format!("/{key}"), "expected a scene graph").into());
    }
    let description = obj.get("description").and_then(Value::as_str).unwrap_or("").trim().to_string();
    let tasks = task_texts(obj)?.into_iter().map(Task::text_only).collect();
    check_env(&env)?;
    let (lo, hi) = (cfg.env_size as f64 * 0.5, cfg.env_size as f64 * 1.5);
    let n = env.size() as f64;
    if n < lo || n > hi {
        return Err(GenError::Validation(format!(
            "the environment has {} nodes; aim for about {} (between {} and {})",
            env.size(),
            cfg.env_size,
            lo.ceil(),
            hi.floor()
        )));
    }
    Ok((description, env, tasks))
}

fn string_list(v: &Value, path: &str) -> Result<Vec<String>, SchemaError> {
    v.as_array()
        .ok_or_else(|| SchemaError::new(path, "expected a list of names"))?
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.as_str()
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .ok_or_else(|| SchemaError::new(format!("{path}/{i}"), "expected a non-empty string"))
        })
        .collect()
}

fn parse_saycan_generation(raw: &str) -> Result<Parts, GenError> {
    let trimmed = raw.trim_start();
    let (tasks_v, objects_v) = match extract_json_array(raw) {
        Some(arr) if !trimmed.starts_with('{') && !trimmed.starts_with("```json\n{") => (arr, None),
        _ => {
            let v = extract_json_object(raw).ok_or_else(|| SchemaError::new("/", "no JSON array of tasks found"))?;
            let obj = v.as_object().expect("extracted an object");
            let t = first_key(obj, &["tasks"])
                .map(|(_, t)| t.clone())
                .ok_or_else(|| SchemaError::new("/tasks", "missing required key"))?;
            (t, first_key(obj, &["objects"]).map(|(_, o)| o.clone()))
        }
    };
    let arr = tasks_v.as_array().ok_or_else(|| SchemaError::new("/", "expected a JSON array of tasks"))?;
    let mut names: Vec<String> = match &objects_v {
        Some(o) => string_list(o, "/objects")?,
        None => Vec::new(),
    };
    let mut tasks = Vec::new();
    for (i, t) in arr.iter().enumerate() {
        let p = format!("/{i}");
        let o = t.as_object().ok_or_else(|| SchemaError::new(&p, "expected a task object"))?;
        let text = o
            .get("raw_input")
            .and_then(Value::as_str)
            .map(|s| s.trim().trim_start_matches('#').trim().to_string())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| SchemaError::new(format!("{p}/raw_input"), "missing required key"))?;
        let config = o
            .get("config")
            .and_then(Value::as_object)
            .ok_or_else(|| SchemaError::new(format!("{p}/config"), "missing required key"))?;
        let list = |k: &str| -> Result<Vec<String>, SchemaError> {
            let v = config.get(k).ok_or_else(|| SchemaError::new(format!("{p}/config/{k}"), "missing required key"))?;
            string_list(v, &format!("{p}/config/{k}"))
        };
        let (pick, place) = (list("pick")?, list("place")?);
        if pick.len() != place.len() {
            return Err(SchemaError::new(format!("{p}/config"), "pick and place lists differ in length").into());
        }
        for n in pick.iter().chain(&place) {
            if !NAMED_POSITIONS.contains(&n.as_str()) && !names.contains(n) {
                names.push(n.clone());
            }
        }
        tasks.push(Task {
            text,
            goal: Some(GoalSpec::Placement {
                predicate: PlacementPredicate::On { pairs: pick.into_iter().zip(place).collect() },
            }),
            specification: None,
            mode: None,
        });
    }
    let (receptacles, objects): (Vec<String>, Vec<String>) =
        names.into_iter().partition(|n| n.ends_with("bowl") || n.ends_with("plate"));
    let env = Environment::ObjectSet(ObjectSetEnv { objects, receptacles, placements: BTreeMap::new() });
    let description = format!(
        "A table with {}.",
        env.as_object_set().map(|s| s.items().collect::<Vec<_>>().join(", ")).unwrap_or_default()
    );
    Ok((description, env, tasks))
}

fn parse_household_generation(raw: &str) -> Result<Parts, GenError> {
    let v = extract_json_object(raw).ok_or_else(|| SchemaError::new("/", "no JSON object found"))?;
    let obj = v.as_object().expect("extracted an object");
    let (key, items) = first_key(obj, &["visible objects", "visible_objects", "objects"])
        .ok_or_else(|| SchemaError::new("/visible objects", "missing required key"))?;
    let items = string_list(items, &format!("/{key}"))?;
    let caps = Capabilities::get();
    let mut seen = BTreeSet::new();
    let (receptacles, objects): (Vec<String>, Vec<String>) =
        items.into_iter().filter(|i| seen.insert(i.clone())).partition(|i| caps.receptacle(i) && !caps.pickupable(i));
    let tasks = task_texts(obj)?.into_iter().map(Task::text_only).collect();
    let description = obj.get("reasoning").and_then(Value::as_str).unwrap_or("").trim().to_string();
    Ok((description, Environment::ObjectSet(ObjectSetEnv { objects, receptacles, placements: BTreeMap::new() }), tasks))
}

/// Prompts the generator until it returns a valid scenario, feeding each
/// failure back as a corrective turn.
pub fn generate_scenario(
    client: &dyn ChatBackend,
    cfg: &GenConfig,
    seed: u64,
    index: usize,
) -> Result<Scenario, GenError> {
    cfg.validate().map_err(GenError::Validation)?;
    let fresh = build_generation_prompt(cfg);
    let mut messages = fresh.clone();
    let ctx = RequestContext { episode_id: format!("generate_{seed}_{index}"), hint: None };
    let mut last = None;
    for attempt in 1..=cfg.max_reprompts + 1 {
        let reply = client.complete(&messages, &ctx)?;
        match parse_generation(&reply.text, cfg) {
            Ok(mut s) => {
                s.id = scenario_id(seed, index);
                s.provenance = Provenance { generator: GeneratorKind::Llm, seed, attempts: attempt };
                return Ok(s);
            }
            Err(e) => {
                if cfg.restart_on_reprompt {
                    messages = fresh.clone();
                } else {
                    messages.push(ChatMessage::assistant(reply.text));
                    messages.push(ChatMessage::user(format!(
                        "Your output was rejected: {e}. Fix the problem and reply with the complete JSON again."
                    )));
                }
                last = Some(e);
            }
        }
    }
    Err(GenError::Exhausted { attempts: cfg.max_reprompts + 1, last: Box::new(last.expect("at least one attempt")) })
}

// ---------------------------------------------------------------------------
// procedural generation

struct Theme {
    name: &'static str,
    regions: &'static [&'static str],
    objects: &'static [&'static str],
}

const THEMES: &[Theme] = &[
    Theme {
        name: "farm",
        regions: &["road", "field", "yard", "bridge", "driveway"],
        objects: &["shed", "gate", "barn", "tractor", "silo", "well", "trough", "haystack"],
    },
    Theme {
        name: "campus",
        regions: &["path", "quad", "courtyard", "plaza", "walkway"],
        objects: &["bench", "fountain", "statue", "bike_rack", "kiosk", "lamppost", "bin", "oak_tree"],
    },
    Theme {
        name: "harbor",
        regions: &["dock", "pier", "boardwalk", "road", "lot"],
        objects: &["crane", "boat", "container", "buoy", "bollard", "lighthouse", "warehouse", "forklift"],
    },
    Theme {
        name: "park",
        regions: &["trail", "meadow", "clearing", "bridge", "parking"],
        objects: &["picnic_table", "pond", "playground", "sign", "restroom", "grill", "gazebo", "bench"],
    },
];

const REGION_ADJ: &[&str] = &["quiet", "busy", "narrow", "wide", "muddy", "paved", "sunny", "shaded"];
const REGION_DETAIL: &[&str] = &[
    "with a few parked bicycles",
    "where people gather at noon",
    "lined with old trees",
    "next to a large puddle",
    "covered in fallen leaves",
    "with a clear view of the area",
];
const OBJECT_COLOR: &[&str] = &["red", "blue", "green", "grey", "white", "brown"];
const OBJECT_STATE: &[&str] = &["new", "worn", "freshly painted", "slightly damaged", "well kept"];

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn polar(rng: &mut ChaCha8Rng, from: [f64; 2], lo: f64, hi: f64) -> [f64; 2] {
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = rng.gen_range(lo..hi);
    [round1(from[0] + r * angle.cos()), round1(from[1] + r * angle.sin())]
}

/// Deterministic scenario for `(cfg, seed, index)`.
pub fn procedural_generate(cfg: &GenConfig, seed: u64, index: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("procedural/{}#{index}", cfg.dialect)));
    let (description, environment, tasks) = match cfg.dialect {
        Dialect::Spine => procedural_spine(cfg, &mut rng),
        Dialect::SayCan => procedural_tabletop(cfg, &mut rng),
        Dialect::LlmPlanner => procedural_household(cfg, &mut rng),
    };
    debug_assert!(environment.validate().is_empty(), "{:?}", environment.validate());
    Scenario {
        id: scenario_id(seed, index),
        dialect: cfg.dialect,
        description,
        environment,
        tasks,
        provenance: Provenance { generator: GeneratorKind::Procedural, seed, attempts: 1 },
    }
}

fn wants_under(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> bool {
    match cfg.task_mix {
        TaskMix::Fully => false,
        TaskMix::Under => true,
        TaskMix::Mixed => rng.gen_bool(0.5),
    }
}

fn build_graph(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> (&'static Theme, SceneGraph) {
    let theme = &THEMES[rng.gen_range(0..THEMES.len())];
    let n = cfg.env_size.max(2);
    let n_regions = ((n as f64 * 0.6).round() as usize).clamp(2, n);
    let n_objects = n - n_regions;

    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    let mut next_name = |kind: &'static str| {
        let c = counters.entry(kind).or_insert(0);
        *c += 1;
        format!("{kind}_{c}")
    };

    let mut regions: Vec<Node> = Vec::new();
    let mut region_edges: Vec<Edge> = Vec::new();
    for i in 0..n_regions {
        let kind = theme.regions[rng.gen_range(0..theme.regions.len())];
        let (coords, parent) = if i == 0 {
            ([0.0, 0.0], None)
        } else {
            let parent = rng.gen_range(i.saturating_sub(4)..i);
            let mut c = polar(rng, regions[parent].coords, 8.0, 18.0);
            for _ in 0..10 {
                if regions.iter().all(|r| dist(r.coords, c) >= 4.0) {
                    break;
                }
                c = polar(rng, regions[parent].coords, 8.0, 18.0);
            }
            (c, Some(parent))
        };
        let desc = format!(
            "A {} {} {}.",
            REGION_ADJ.choose(rng).expect("non-empty"),
            kind.replace('_', " "),
            REGION_DETAIL.choose(rng).expect("non-empty")
        );
        let node = Node::new(next_name(kind), coords).with_description(desc);
        if let Some(p) = parent {
            region_edges.push(canonical_edge(&regions[p].name, &node.name));
        }
        regions.push(node);
    }
    let mut have: BTreeSet<Edge> = region_edges.iter().cloned().collect();
    for i in 0..n_regions {
        for j in i + 1..n_regions {
            let e = canonical_edge(&regions[i].name, &regions[j].name);
            if !have.contains(&e) && dist(regions[i].coords, regions[j].coords) < 15.0 && rng.gen_bool(0.3) {
                have.insert(e.clone());
                region_edges.push(e);
            }
        }
    }

    let mut objects = Vec::new();
    let mut object_edges = Vec::new();
    for _ in 0..n_objects {
        let class = theme.objects[rng.gen_range(0..theme.objects.len())];
        let anchor = rng.gen_range(0..n_regions);
        let coords = polar(rng, regions[anchor].coords, 2.0, 6.0);
        let desc = format!(
            "A {} {} that looks {}.",
            OBJECT_COLOR.choose(rng).expect("non-empty"),
            class.replace('_', " "),
            OBJECT_STATE.choose(rng).expect("non-empty")
        );
        let node = Node::new(next_name(class), coords).with_description(desc);
        object_edges.push((node.name.clone(), regions[anchor].name.clone()));
        if rng.gen_bool(0.25) {
            let second = (0..n_regions)
                .filter(|r| *r != anchor)
                .min_by(|a, b| dist(regions[*a].coords, coords).total_cmp(&dist(regions[*b].coords, coords)));
            if let Some(s) = second.filter(|s| dist(regions[*s].coords, coords) <= 12.0) {
                object_edges.push((node.name.clone(), regions[s].name.clone()));
            }
        }
        objects.push(node);
    }
    let robot_location = regions[0].name.clone();
    (theme, SceneGraph { regions, objects, region_edges, object_edges, robot_location })
}

fn class_of(name: &str) -> &str {
    name.rsplit_once('_').map(|(c, _)| c).unwrap_or(name)
}

fn words(s: &str) -> String {
    s.replace('_', " ")
}

fn all(goals: Vec<GoalSpec>) -> GoalSpec {
    GoalSpec::All { goals }
}

fn spine_task(g: &SceneGraph, rng: &mut ChaCha8Rng, under: bool) -> Task {
    let regions: Vec<&str> = g.regions.iter().map(|r| r.name.as_str()).filter(|r| *r != g.robot_location).collect();
    let mut class_count: BTreeMap<&str, usize> = BTreeMap::new();
    for o in &g.objects {
        *class_count.entry(class_of(&o.name)).or_default() += 1;
    }
    let unique: Vec<&str> =
        g.objects.iter().map(|o| o.name.as_str()).filter(|o| class_count[class_of(o)] == 1).collect();
    let mut adj_count: BTreeMap<&str, usize> = BTreeMap::new();
    let adj_of = |r: &str| -> Option<&'static str> {
        let d = g.region(r)?.description.as_deref()?;
        REGION_ADJ.iter().copied().find(|a| d.starts_with(&format!("A {a} ")))
    };
    for r in &regions {
        if let Some(a) = adj_of(r) {
            *adj_count.entry(a).or_default() += 1;
        }
    }
    let distinctive: Vec<&str> =
        regions.iter().copied().filter(|r| adj_of(r).is_some_and(|a| adj_count[a] == 1)).collect();

    let task = |text: String, goal: GoalSpec, spec: Specification, mode: TaskMode| Task {
        text,
        goal: Some(goal),
        specification: Some(spec),
        mode: Some(mode),
    };
    if under {
        let mut families: Vec<u8> = Vec::new();
        if !unique.is_empty() {
            families.extend([0, 1, 2]);
            if unique.iter().any(|o| g.anchors(o).count() == 1) {
                families.push(3);
            }
        }
        if !distinctive.is_empty() {
            families.push(4);
        }
        if let Some(&f) = families.choose(rng) {
            let o = *unique.choose(rng).unwrap_or(&"");
            let c = words(class_of(o));
            return match f {
                0 => task(
                    format!("Is there a {c} around here?"),
                    all(vec![
                        GoalSpec::RevealObject { object: o.into() },
                        GoalSpec::AnswerMentions { tokens: vec![o.into()] },
                    ]),
                    Specification::Under,
                    TaskMode::Exploration,
                ),
                1 => task(
                    format!("Take me to the {c}."),
                    GoalSpec::NearObject { object: o.into() },
                    Specification::Under,
                    TaskMode::Exploration,
                ),
                2 => task(
                    format!("What can you tell me about the {c}?"),
                    all(vec![
                        GoalSpec::InspectNode { node: o.into() },
                        GoalSpec::AnswerMentions { tokens: vec![o.into()] },
                    ]),
                    Specification::Under,
                    TaskMode::Exploration,
                ),
                3 => {
                    let single: Vec<&str> = unique.iter().copied().filter(|o| g.anchors(o).count() == 1).collect();
                    let o = *single.choose(rng).expect("checked non-empty");
                    let anchor = g.anchors(o).next().expect("one anchor").to_string();
                    task(
                        format!("Map the area next to the {}.", words(class_of(o))),
                        GoalSpec::MapRegion { region: anchor },
                        Specification::Under,
                        TaskMode::Mapping,
                    )
                }
                _ => {
                    let r = *distinctive.choose(rng).expect("checked non-empty");
                    let a = adj_of(r).expect("has adjective");
                    task(
                        format!("I heard one of the {}s is {a}. Find out which one.", words(class_of(r))),
                        all(vec![
                            GoalSpec::InspectNode { node: r.into() },
                            GoalSpec::AnswerMentions { tokens: vec![r.into()] },
                        ]),
                        Specification::Under,
                        TaskMode::Mapping,
                    )
                }
            };
        }
    }
    let mut families: Vec<u8> = vec![0, 1, 2];
    if !g.objects.is_empty() {
        families.extend([3, 4, 5]);
    }
    let f = *families.choose(rng).expect("non-empty");
    let r = regions.choose(rng).copied().unwrap_or(g.robot_location.as_str()).to_string();
    let o = g.objects.choose(rng).map(|o| o.name.clone()).unwrap_or_default();
    let full = Specification::Fully;
    match f {
        0 => task(format!("Go to {r}."), GoalSpec::VisitRegion { region: r }, full, TaskMode::Mapping),
        1 => task(format!("Map the area around {r}."), GoalSpec::MapRegion { region: r }, full, TaskMode::Mapping),
        2 => task(
            format!("Inspect {r} and tell me what you find."),
            all(vec![GoalSpec::InspectNode { node: r.clone() }, GoalSpec::AnswerMentions { tokens: vec![r] }]),
            full,
            TaskMode::Mapping,
        ),
        3 => task(format!("Go next to {o}."), GoalSpec::NearObject { object: o }, full, TaskMode::Exploration),
        4 => task(
            format!("Find {o} and tell me where it is."),
            all(vec![GoalSpec::RevealObject { object: o.clone() }, GoalSpec::AnswerMentions { tokens: vec![o] }]),
            full,
            TaskMode::Exploration,
        ),
        _ => task(
            format!("Inspect {o} and describe it."),
            all(vec![GoalSpec::InspectNode { node: o.clone() }, GoalSpec::AnswerMentions { tokens: vec![o] }]),
            full,
            TaskMode::Exploration,
        ),
    }
}

fn procedural_spine(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Parts {
    let (theme, g) = build_graph(cfg, rng);
    let tasks = (0..cfg.n_tasks)
        .map(|_| {
            let under = wants_under(cfg, rng);
            spine_task(&g, rng, under)
        })
        .collect();
    let description = format!("A {} with {} regions and {} objects.", theme.name, g.regions.len(), g.objects.len());
    (description, Environment::SceneGraph(g), tasks)
}

const COLORS: &[&str] = &["red", "green", "blue", "yellow", "purple", "orange", "pink", "white", "black", "brown"];
const LIGHT_COLORS: &[&str] = &["yellow", "white", "pink", "orange"];
const TABLE_SPOTS: &[&str] =
    &["middle", "top left corner", "top right corner", "bottom left corner", "bottom right corner"];

fn procedural_tabletop(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Parts {
    let k = cfg.env_size.clamp(1, 8);
    let mut palette: Vec<&str> = COLORS.to_vec();
    palette.shuffle(rng);
    let block_colors: Vec<&str> = palette[..k].to_vec();
    let mut bowl_colors: Vec<&str> = block_colors.iter().copied().filter(|_| rng.gen_bool(0.7)).collect();
    let extra = rng.gen_range(0..=2usize).min(palette.len() - k);
    bowl_colors.extend(&palette[k..k + extra]);
    if bowl_colors.is_empty() {
        bowl_colors.push(block_colors[0]);
    }
    let blocks: Vec<String> = block_colors.iter().map(|c| format!("{c} block")).collect();
    let bowls: Vec<String> = bowl_colors.iter().map(|c| format!("{c} bowl")).collect();
    let mut placements = BTreeMap::new();
    for (i, b) in blocks.iter().enumerate() {
        let roll: f64 = rng.gen();
        if roll < 0.2 {
            placements.insert(b.clone(), bowls.choose(rng).expect("non-empty").clone());
        } else if roll < 0.35 && i > 0 {
            let base = &blocks[rng.gen_range(0..i)];
            if !placements.values().any(|v| v == base) {
                placements.insert(b.clone(), base.clone());
            }
        }
    }
    let env = ObjectSetEnv { objects: blocks.clone(), receptacles: bowls.clone(), placements };
    let tasks = (0..cfg.n_tasks)
        .map(|_| {
            let under = wants_under(cfg, rng);
            tabletop_task(&env, rng, under)
        })
        .collect();
    let description = format!("A table with {} blocks and {} bowls.", blocks.len(), bowls.len());
    (description, Environment::ObjectSet(env), tasks)
}

fn tabletop_task(s: &ObjectSetEnv, rng: &mut ChaCha8Rng, under: bool) -> Task {
    let color = |n: &str| n.rsplit_once(' ').map(|(c, _)| c.to_string()).unwrap_or_default();
    let matching: Vec<&String> =
        s.objects.iter().filter(|b| s.receptacles.contains(&format!("{} bowl", color(b)))).collect();
    let in_own_bowl = s.objects.iter().any(|b| s.placements.get(b) == Some(&format!("{} bowl", color(b))));
    let on = |pairs: Vec<(String, String)>| GoalSpec::Placement { predicate: PlacementPredicate::On { pairs } };
    let task = |text: String, goal: GoalSpec, spec: Specification| Task {
        text,
        goal: Some(goal),
        specification: Some(spec),
        mode: None,
    };
    let block = s.objects.choose(rng).expect("at least one block").clone();
    let bowl = s
        .receptacles
        .iter()
        .filter(|b| s.placements.get(&block) != Some(*b))
        .collect::<Vec<_>>()
        .choose(rng)
        .map(|b| (*b).clone());
    if under {
        let mut families = vec![0u8];
        if bowl.is_some() {
            families.push(1);
        }
        if in_own_bowl {
            families.push(2);
        }
        if s.objects.len() >= 2 {
            families.push(3);
        }
        let light: Vec<&String> = s.objects.iter().filter(|b| LIGHT_COLORS.contains(&color(b).as_str())).collect();
        if light.len() == 1 {
            families.push(4);
        }
        return match *families.choose(rng).expect("non-empty") {
            1 => {
                let bowl = bowl.expect("checked");
                task(
                    format!("put the {} one in the {} thing.", color(&block), color(&bowl)),
                    on(vec![(block, bowl)]),
                    Specification::Under,
                )
            }
            2 => task(
                "take the blocks out of the bowls that match their color.".into(),
                GoalSpec::Placement { predicate: PlacementPredicate::NoBlockInMatchingBowl },
                Specification::Under,
            ),
            3 => {
                let pairs: Vec<(String, String)> = s.objects.windows(2).map(|w| (w[1].clone(), w[0].clone())).collect();
                task("stack the blocks.".into(), on(pairs), Specification::Under)
            }
            4 => {
                let b = light[0].clone();
                let spot = TABLE_SPOTS.choose(rng).expect("non-empty");
                task(
                    format!("move the light colored block to the {spot}."),
                    on(vec![(b, spot.to_string())]),
                    Specification::Under,
                )
            }
            _ => {
                let b = s.objects.choose(rng).expect("non-empty");
                let spot = TABLE_SPOTS.choose(rng).expect("non-empty");
                task(
                    format!("put one of the blocks in the {spot}; I want the {} one.", color(b)),
                    on(vec![(b.clone(), spot.to_string())]),
                    Specification::Under,
                )
            }
        };
    }
    let mut families = vec![2u8];
    if !matching.is_empty() && matching.iter().any(|b| s.placements.get(*b) != Some(&format!("{} bowl", color(b)))) {
        families.push(0);
    }
    if bowl.is_some() {
        families.push(1);
    }
    if s.objects.len() >= 2 {
        families.push(3);
    }
    match *families.choose(rng).expect("non-empty") {
        0 => task(
            "sort all the blocks into their matching color bowls.".into(),
            GoalSpec::Placement { predicate: PlacementPredicate::EachBlockInMatchingBowl },
            Specification::Fully,
        ),
        1 => {
            let bowl = bowl.expect("checked");
            task(format!("put the {block} in the {bowl}."), on(vec![(block, bowl)]), Specification::Fully)
        }
        3 => {
            let other =
                s.objects.iter().filter(|o| **o != block && s.placements.get(&block) != Some(*o)).collect::<Vec<_>>();
            match other.choose(rng) {
                Some(o) => task(
                    format!("stack the {block} on top of the {o}."),
                    on(vec![(block.clone(), (*o).clone())]),
                    Specification::Fully,
                ),
                None => {
                    let spot = TABLE_SPOTS.choose(rng).expect("non-empty");
                    task(
                        format!("move the {block} to the {spot}."),
                        on(vec![(block, spot.to_string())]),
                        Specification::Fully,
                    )
                }
            }
        }
        _ => {
            let spot = TABLE_SPOTS.choose(rng).expect("non-empty");
            task(format!("move the {block} to the {spot}."), on(vec![(block, spot.to_string())]), Specification::Fully)
        }
    }
}

const FIXTURES: &[&str] = &[
    "CounterTop",
    "Fridge",
    "Microwave",
    "Cabinet",
    "DiningTable",
    "Sink",
    "StoveBurner",
    "GarbageCan",
    "Drawer",
    "Shelf",
    "SideTable",
];
const STORAGE: &[&str] = &["CounterTop", "Fridge", "Cabinet", "DiningTable", "Drawer", "Shelf", "SideTable", "Sink"];
const ITEMS: &[&str] = &[
    "Apple",
    "Bread",
    "Egg",
    "Potato",
    "Tomato",
    "Lettuce",
    "Mug",
    "Cup",
    "Plate",
    "Bowl",
    "Pan",
    "Pot",
    "Knife",
    "Spoon",
    "Fork",
    "Kettle",
    "SaltShaker",
    "DishSponge",
];
const FOODS: &[&str] = &["Apple", "Bread", "Egg", "Potato", "Tomato", "Lettuce"];
const DISHES: &[&str] = &["Mug", "Cup", "Plate", "Bowl"];
const HOLDERS: &[&str] = &["Plate", "Bowl", "Pan", "Pot"];

/// Emits feasible household sub-goals while tracking what is open.
struct StepWriter<'a> {
    state: WorldState,
    env: &'a ObjectSetEnv,
    steps: Vec<ActionCall>,
}

impl<'a> StepWriter<'a> {
    fn new(env: &'a ObjectSetEnv) -> Self {
        let full = Environment::ObjectSet(env.clone());
        Self { state: WorldState::from_parts(full.clone(), &full, usize::MAX), env, steps: Vec::new() }
    }

    fn push(&mut self, name: ActionName, args: &[&str]) -> bool {
        let call = ActionCall::new(name, args.iter().copied());
        match self.state.apply(&call) {
            Ok((next, d)) if d.kind != DeltaKind::Feedback => {
                self.state = next;
                self.steps.push(call);
                true
            }
            _ => false,
        }
    }

    fn open(&mut self, x: &str) {
        if Capabilities::get().openable(x) && !self.state.manipulation.open.contains(x) {
            self.push(ActionName::OpenObject, &[x]);
        }
    }

    fn go(&mut self, x: &str) {
        self.push(ActionName::Navigation, &[x]);
        self.open(x);
    }

    fn fetch(&mut self, o: &str) -> bool {
        let src = self.state.placements.get(o).cloned().or_else(|| self.env.placements.get(o).cloned());
        if let Some(src) = src {
            self.go(&src);
        }
        self.push(ActionName::PickupObject, &[o])
    }

    fn place(&mut self, o: &str, dst: &str) -> bool {
        self.go(dst);
        self.push(ActionName::PutObject, &[o, dst])
    }
}

fn procedural_household(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Parts {
    let n = cfg.env_size.max(4);
    let n_fixtures = (n / 2).clamp(3, FIXTURES.len());
    let mut fixtures: Vec<&str> = vec!["CounterTop", "Fridge", "Microwave"];
    let mut rest: Vec<&str> = FIXTURES[3..].to_vec();
    rest.shuffle(rng);
    fixtures.extend(rest.into_iter().take(n_fixtures - 3));
    let mut items: Vec<&str> = ITEMS.to_vec();
    items.shuffle(rng);
    let mut chosen: Vec<&str> = items.into_iter().take((n - n_fixtures).clamp(2, ITEMS.len())).collect();
    if !chosen.contains(&"Knife") {
        chosen.pop();
        chosen.push("Knife");
    }
    let storage: Vec<&str> = STORAGE.iter().copied().filter(|s| fixtures.contains(s)).collect();
    let placements: BTreeMap<String, String> =
        chosen.iter().map(|o| (o.to_string(), storage.choose(rng).expect("CounterTop present").to_string())).collect();
    let env = ObjectSetEnv {
        objects: chosen.iter().map(|s| s.to_string()).collect(),
        receptacles: fixtures.iter().map(|s| s.to_string()).collect(),
        placements,
    };
    let tasks = (0..cfg.n_tasks)
        .map(|_| {
            let under = wants_under(cfg, rng);
            household_task(&env, rng, under)
        })
        .collect();
    let description = format!("A kitchen with {}.", env.receptacles.join(", "));
    (description, Environment::ObjectSet(env), tasks)
}

fn household_task(env: &ObjectSetEnv, rng: &mut ChaCha8Rng, under: bool) -> Task {
    let caps = Capabilities::get();
    let has = |x: &str| env.objects.iter().any(|o| o == x);
    let foods: Vec<&str> = FOODS.iter().copied().filter(|f| has(f)).collect();
    let dishes: Vec<&str> = DISHES.iter().copied().filter(|f| has(f)).collect();
    let holders: Vec<&str> = HOLDERS.iter().copied().filter(|f| has(f)).collect();
    let portable: Vec<&str> = env.objects.iter().map(String::as_str).filter(|o| *o != "Knife").collect();
    let surfaces: Vec<&str> =
        env.receptacles.iter().map(String::as_str).filter(|r| caps.receptacle(r) && *r != "Microwave").collect();

    let mut families = vec![0u8];
    if !foods.is_empty() {
        families.extend([1, 2, 3]);
    }
    if !holders.is_empty() && portable.len() >= 2 {
        families.push(4);
    }
    let family = *families.choose(rng).expect("non-empty");
    let mut w = StepWriter::new(env);
    let dst_for = |o: &str, rng: &mut ChaCha8Rng| -> String {
        let options: Vec<&str> =
            surfaces.iter().copied().filter(|s| env.placements.get(o).map(String::as_str) != Some(*s)).collect();
        options.choose(rng).unwrap_or(&"CounterTop").to_string()
    };
    let single = |pool: &[&str]| pool.len() == 1;
    let (text, spec) = match family {
        1 => {
            let o = *foods.choose(rng).expect("checked");
            let dst = dst_for(o, rng);
            w.fetch(o);
            w.go("Microwave");
            w.push(ActionName::PutObject, &[o, "Microwave"]);
            w.push(ActionName::CloseObject, &["Microwave"]);
            w.push(ActionName::ToggleObjectOn, &["Microwave"]);
            w.push(ActionName::ToggleObjectOff, &["Microwave"]);
            w.open("Microwave");
            w.push(ActionName::PickupObject, &[o]);
            w.push(ActionName::CloseObject, &["Microwave"]);
            w.place(o, &dst);
            if under && single(&foods) {
                (format!("Warm up something to eat and leave it on the {dst}."), Specification::Under)
            } else {
                (format!("Put a heated {o} on the {dst}."), Specification::Fully)
            }
        }
        2 => {
            let o = *foods.choose(rng).expect("checked");
            let dst = dst_for(o, rng);
            w.fetch(o);
            w.go("Fridge");
            w.push(ActionName::PutObject, &[o, "Fridge"]);
            w.push(ActionName::CloseObject, &["Fridge"]);
            w.open("Fridge");
            w.push(ActionName::PickupObject, &[o]);
            w.push(ActionName::CloseObject, &["Fridge"]);
            w.place(o, &dst);
            if under && single(&foods) {
                (format!("I want something cold to eat on the {dst}."), Specification::Under)
            } else {
                (format!("Put a chilled {o} on the {dst}."), Specification::Fully)
            }
        }
        3 => {
            let sliceable: Vec<&str> = foods.iter().copied().filter(|f| caps.sliceable(f)).collect();
            let o = *sliceable.choose(rng).unwrap_or(&foods[0]);
            w.fetch("Knife");
            if let Some(src) = env.placements.get(o) {
                w.go(src);
            }
            w.push(ActionName::SliceObject, &[o]);
            if under && single(&foods) {
                ("Cut up the food for me.".to_string(), Specification::Under)
            } else {
                (format!("Slice the {o}."), Specification::Fully)
            }
        }
        4 => {
            let holder = *holders.choose(rng).expect("checked");
            let o = *portable.iter().filter(|p| **p != holder).collect::<Vec<_>>().choose(rng).expect("two portables");
            let dst = dst_for(holder, rng);
            w.fetch(o);
            if let Some(src) = env.placements.get(holder) {
                w.go(src);
            }
            w.push(ActionName::PutObject, &[o, holder]);
            w.push(ActionName::PickupObject, &[holder]);
            w.place(holder, &dst);
            (format!("Put the {o} in the {holder} and move it to the {dst}."), Specification::Fully)
        }
        _ => {
            let o = *portable.choose(rng).expect("at least one item");
            let dst = dst_for(o, rng);
            w.fetch(o);
            w.place(o, &dst);
            if under && dishes.contains(&o) && single(&dishes) {
                (format!("Clear the dish away to the {dst}."), Specification::Under)
            } else {
                (format!("Put the {o} in the {dst}."), Specification::Fully)
            }
        }
    };
    Task { text, goal: Some(GoalSpec::SubgoalSequence { steps: w.steps }), specification: Some(spec), mode: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_client::{NullBackend, ScriptedBackend};

    fn cfg(d: Dialect) -> GenConfig {
        GenConfig { dialect: d, env_size: 25, n_tasks: 25, ..GenConfig::default() }
    }

    #[test]
    fn prompts_substitute_sizes() {
        let spine = build_generation_prompt(&GenConfig { env_size: 20, n_tasks: 25, ..cfg(Dialect::Spine) });
        let text = &spine.0[1].content;
        assert!(text.contains("DO NOT reference specific objects"));
        assert!(text.contains("size 20 with 25 corresponding tasks"));
        assert!(text.contains("\"robot_location\": \"ground_1\""));
        let sc = build_generation_prompt(&GenConfig { env_size: 4, n_tasks: 3, ..cfg(Dialect::SayCan) });
        assert!(sc.0[1].content.ends_with("Generate 3 tasks using 4 blocks."));
        let lp = build_generation_prompt(&cfg(Dialect::LlmPlanner));
        assert!(lp.0[1].content.contains("OpenObject"));
        assert!(spine.validate().is_ok());
    }

    #[test]
    fn boardwalk_generation_parses() {
        let raw = include_str!("../tests/fixtures/boardwalk_generation.json");
        let s = parse_generation(raw, &cfg(Dialect::Spine)).unwrap();
        let g = s.environment.as_scene_graph().unwrap();
        assert_eq!((g.objects.len(), g.regions.len(), s.tasks.len()), (9, 20, 25));
        assert!(s.description.starts_with("A bustling coastal boardwalk scene"));
    }

    #[test]
    fn generation_errors() {
        let c = cfg(Dialect::Spine);
        match parse_generation(r#"{"description": "a place"}"#, &c) {
            Err(GenError::Schema(e)) => assert_eq!(e.path, "/environment"),
            other => panic!("{other:?}"),
        }
        let bad = r#"{"environment": {"regions": [{"name": "a", "coords": [0, 0]}], "objects": [],
            "region_connections": [["a", "road_9"]], "object_connections": [], "robot_location": "a"},
            "tasks": ["x"]}"#;
        match parse_generation(bad, &GenConfig { env_size: 2, n_tasks: 1, ..c }) {
            Err(GenError::Validation(m)) => assert!(m.contains("road_9"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fenced_saycan_and_household_outputs() {
        let raw = "Here you go:\n```json\n[{\"raw_input\": \"# stack the blocks.\", \"config\": {\"pick\": [\"green block\"], \"place\": [\"blue block\"]}}]\n```";
        let s = parse_generation(raw, &GenConfig { n_tasks: 1, ..cfg(Dialect::SayCan) }).unwrap();
        assert_eq!(s.tasks[0].text, "stack the blocks.");
        let set = s.environment.as_object_set().unwrap();
        assert_eq!(set.objects, vec!["green block", "blue block"]);
        let raw = r#"{"tasks": ["Slice the bread."], "visible objects": ["Bread", "Knife", "DiningTable"], "reasoning": "simple"}"#;
        let s = parse_generation(raw, &GenConfig { n_tasks: 1, ..cfg(Dialect::LlmPlanner) }).unwrap();
        let set = s.environment.as_object_set().unwrap();
        assert_eq!(set.receptacles, vec!["DiningTable"]);
    }

    #[test]
    fn reprompt_loop() {
        let good = include_str!("../tests/fixtures/boardwalk_generation.json").to_string();
        let c = cfg(Dialect::Spine);
        let once = generate_scenario(&ScriptedBackend(vec![good.clone()]), &c, 1, 0).unwrap();
        assert_eq!(once.provenance.attempts, 1);
        assert_eq!(once.id, "scenario_1_0");
        let twice = generate_scenario(&ScriptedBackend(vec!["garbage".into(), good]), &c, 1, 0).unwrap();
        assert_eq!(twice.provenance.attempts, 2);
        let e = generate_scenario(&NullBackend, &c, 1, 0).unwrap_err();
        assert!(matches!(e, GenError::Exhausted { attempts: 3, .. }));
    }

    #[test]
    fn procedural_is_deterministic_and_valid() {
        for d in Dialect::ALL {
            let c = GenConfig { env_size: 10, n_tasks: 6, ..cfg(d) };
            let a = procedural_generate(&c, 7, 0);
            assert_eq!(a.to_json(), procedural_generate(&c, 7, 0).to_json());
            assert_ne!(a.to_json(), procedural_generate(&c, 7, 1).to_json());
            assert!(a.environment.validate().is_empty());
            assert_eq!(a.tasks.len(), 6);
            assert!(a.tasks.iter().all(|t| t.goal.is_some()));
            let back: Scenario = serde_json::from_str(&a.to_json()).unwrap();
            assert_eq!(back, a);
        }
    }
}
