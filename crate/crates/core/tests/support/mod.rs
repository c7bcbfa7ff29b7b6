//! Random inputs and independent checkers shared by the property tests and
//! the acceptance harness.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use plansynth_core::emulator::delta::parse_ops;
use plansynth_core::emulator::DeltaKind;
use plansynth_core::env_model::{canonical_edge, Edge, Node, SceneGraph};
use plansynth_core::masking::mask_environment;
use plansynth_core::plan_io::{parse_response, render_response};
use plansynth_core::scenario_gen::{procedural_generate, GenConfig};
use plansynth_core::{ActionCall, ActionName, Dialect, Environment, PlannerResponse, WorldState};
use rand::seq::SliceRandom;
use rand::Rng;

pub mod fixtures;

/// A scene graph with `1..=max_regions` regions, random edges (possibly
/// disconnected), and objects anchored to one or two regions.
pub fn random_graph<R: Rng>(rng: &mut R, max_regions: usize) -> SceneGraph {
    let n = rng.gen_range(1..=max_regions);
    let regions: Vec<Node> =
        (0..n).map(|i| Node::new(format!("r_{i}"), [rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0)])).collect();
    let p = rng.gen_range(0.1..0.7);
    let mut region_edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                region_edges.push((regions[i].name.clone(), regions[j].name.clone()));
            }
        }
    }
    let mut objects = Vec::new();
    let mut object_edges = Vec::new();
    for k in 0..rng.gen_range(0..=n + 2) {
        let a = rng.gen_range(0..n);
        let c = regions[a].coords;
        objects.push(
            Node::new(format!("o_{k}"), [c[0] + rng.gen_range(-4.0..4.0), c[1] + rng.gen_range(-4.0..4.0)])
                .with_description(format!("object number {k}")),
        );
        object_edges.push((format!("o_{k}"), regions[a].name.clone()));
        let b = rng.gen_range(0..n);
        if b != a && rng.gen_bool(0.3) {
            object_edges.push((format!("o_{k}"), regions[b].name.clone()));
        }
    }
    let robot_location = regions[rng.gen_range(0..n)].name.clone();
    let regions = regions
        .into_iter()
        .enumerate()
        .map(|(i, r)| if i % 2 == 0 { r.with_description(format!("region {i}")) } else { r })
        .collect();
    SceneGraph { regions, objects, region_edges, object_edges, robot_location }
}

/// Random graphs, plus procedural environments of every dialect.
pub fn random_env<R: Rng>(rng: &mut R) -> (Dialect, Environment) {
    match rng.gen_range(0..4) {
        0 => (Dialect::Spine, Environment::SceneGraph(random_graph(rng, 12))),
        k => {
            let dialect = Dialect::ALL[k - 1];
            let cfg = GenConfig { dialect, env_size: rng.gen_range(3..40), n_tasks: 1, ..GenConfig::default() };
            (dialect, procedural_generate(&cfg, rng.gen(), rng.gen_range(0..1000)).environment)
        }
    }
}

fn region_adjacency<'a>(edges: impl IntoIterator<Item = &'a Edge>) -> HashMap<String, Vec<String>> {
    let mut adj: HashMap<String, Vec<String>> = HashMap::new();
    for (a, b) in edges {
        adj.entry(a.clone()).or_default().push(b.clone());
        adj.entry(b.clone()).or_default().push(a.clone());
    }
    adj
}

/// Endpoints of every simple path starting at `from`, found by exhaustive
/// enumeration. Exponential; meant for small graphs.
pub fn brute_force_reachable<'a>(edges: impl IntoIterator<Item = &'a Edge>, from: &str) -> BTreeSet<String> {
    fn walk(adj: &HashMap<String, Vec<String>>, path: &mut Vec<String>, out: &mut BTreeSet<String>) {
        let cur = path.last().unwrap().clone();
        out.insert(cur.clone());
        for next in adj.get(&cur).into_iter().flatten() {
            if !path.contains(next) {
                path.push(next.clone());
                walk(adj, path, out);
                path.pop();
            }
        }
    }
    let adj = region_adjacency(edges);
    let mut out = BTreeSet::new();
    walk(&adj, &mut vec![from.to_string()], &mut out);
    out
}

/// Checks reconstruction, robot anchoring, visible connectivity, subset
/// relations, and determinism for one masking call.
pub fn masking_violations(env: &Environment, fraction: f64, seed: u64) -> Vec<String> {
    let mut v = Vec::new();
    let m = mask_environment(env, fraction, seed);
    if m.reconstruct() != *env {
        v.push("reconstruction differs from the input".to_string());
    }
    if mask_environment(env, fraction, seed) != m {
        v.push("masking is not deterministic".to_string());
    }
    match (env, &m.visible) {
        (Environment::SceneGraph(full), Environment::SceneGraph(vis)) => {
            if vis.robot_location != full.robot_location || vis.region(&vis.robot_location).is_none() {
                v.push(format!("robot {} not anchored in a visible region", full.robot_location));
            }
            let names: BTreeSet<&str> = vis.node_names().collect();
            let full_names: BTreeSet<&str> = full.node_names().collect();
            if !names.is_subset(&full_names) {
                v.push("visible nodes not a subset of the full graph".to_string());
            }
            for (a, b) in vis.region_edges.iter().chain(&vis.object_edges) {
                if !names.contains(a.as_str()) || !names.contains(b.as_str()) {
                    v.push(format!("visible edge ({a}, {b}) touches a hidden node"));
                }
            }
            let reach = brute_force_reachable(&vis.region_edges, &vis.robot_location);
            for r in &vis.regions {
                if !reach.contains(&r.name) {
                    v.push(format!("visible region {} unreachable from the robot", r.name));
                }
            }
            if fraction <= 0.0 && m.visible != *env {
                v.push("fraction 0 hid something".to_string());
            }
        }
        (Environment::ObjectSet(full), Environment::ObjectSet(vis)) => {
            if !vis.items().all(|x| full.contains(x)) {
                v.push("visible items not a subset".to_string());
            }
        }
        _ => v.push("masking changed the environment kind".to_string()),
    }
    v
}

fn names_in(env: &Environment) -> Vec<String> {
    match env {
        Environment::SceneGraph(g) => g.node_names().map(String::from).collect(),
        Environment::ObjectSet(s) => s.items().map(String::from).collect(),
    }
}

/// A syntactically valid action for `dialect` whose arguments are mostly
/// real node names, sometimes unknown ones.
pub fn random_action<R: Rng>(rng: &mut R, dialect: Dialect, env: &Environment) -> ActionCall {
    let mut names = names_in(env);
    names.push("ghost_9".to_string());
    if dialect == Dialect::SayCan {
        names.extend(["middle", "table", "top left corner"].map(String::from));
    }
    let choices: Vec<ActionName> =
        ActionName::for_dialect(dialect).filter(|a| !a.is_terminal() || rng.gen_bool(0.1)).collect();
    let name = *choices.choose(rng).unwrap_or(&ActionName::for_dialect(dialect).next().unwrap());
    let (lo, hi) = name.arity();
    let n = rng.gen_range(lo..=hi);
    let mut args: Vec<String> = (0..n).map(|_| names.choose(rng).unwrap().clone()).collect();
    match name {
        ActionName::ExploreRegion => args[1] = format!("{}", rng.gen_range(0..25)),
        ActionName::Answer => args[0] = "nothing to report".to_string(),
        _ => {}
    }
    ActionCall::new(name, args)
}

/// Applies `steps` random actions and checks reveal monotonicity,
/// revealed ⊆ full, the frame property for infeasible actions, goto
/// feasibility against brute-force reachability, and delta round-trips.
pub fn emulator_violations<R: Rng>(rng: &mut R, dialect: Dialect, mut state: WorldState, steps: usize) -> Vec<String> {
    let mut v = Vec::new();
    let full_names: BTreeSet<String> = names_in(&state.full).into_iter().collect();
    let (full_regions, full_objects): (BTreeSet<Edge>, BTreeSet<Edge>) = match &*state.full {
        Environment::SceneGraph(g) => (
            g.region_edges.iter().map(|(a, b)| canonical_edge(a, b)).collect(),
            g.object_edges.iter().cloned().collect(),
        ),
        Environment::ObjectSet(_) => Default::default(),
    };
    for _ in 0..steps {
        if state.is_terminal() {
            break;
        }
        let a = random_action(rng, dialect, &state.full);
        let Ok((next, delta)) = state.apply(&a) else {
            continue;
        };
        let tag = a.render();
        if !state.revealed.nodes.is_subset(&next.revealed.nodes)
            || !state.revealed.region_edges.is_subset(&next.revealed.region_edges)
            || !state.revealed.object_edges.is_subset(&next.revealed.object_edges)
        {
            v.push(format!("{tag}: revealed set shrank"));
        }
        if !next.revealed.nodes.is_subset(&full_names) {
            v.push(format!("{tag}: revealed a node outside the environment"));
        }
        let redges: BTreeSet<Edge> = next.revealed.region_edges.iter().map(|(a, b)| canonical_edge(a, b)).collect();
        if !redges.is_subset(&full_regions) || !next.revealed.object_edges.is_subset(&full_objects) {
            v.push(format!("{tag}: revealed an edge outside the environment"));
        }
        if delta.kind == DeltaKind::Feedback && next != state {
            v.push(format!("{tag}: infeasible action changed the state"));
        }
        if a.name == ActionName::Goto && state.revealed.nodes.contains(a.arg(0)) {
            let from = state.robot_location.clone().unwrap_or_default();
            let reach = brute_force_reachable(&state.revealed.region_edges, &from);
            let is_region = matches!(&*state.full, Environment::SceneGraph(g) if g.region(a.arg(0)).is_some());
            let feasible = delta.kind != DeltaKind::Feedback;
            if is_region && feasible != reach.contains(a.arg(0)) {
                v.push(format!("{tag}: feasibility {feasible} disagrees with brute-force reachability"));
            }
        }
        if !delta.ops().is_empty() {
            match parse_ops(&delta.rendered) {
                Ok(ops) if ops == delta.ops() => {}
                Ok(ops) => v.push(format!("{tag}: delta {:?} re-parsed as {ops:?}", delta.rendered)),
                Err(e) => v.push(format!("{tag}: delta {:?} does not parse: {e}", delta.rendered)),
            }
        }
        state = next;
    }
    v
}

/// A valid rendered response for `dialect`.
pub fn random_response<R: Rng>(rng: &mut R, dialect: Dialect) -> String {
    let env = random_env_for(rng, dialect);
    let plan: Vec<ActionCall> = (0..rng.gen_range(1..6)).map(|_| random_action(rng, dialect, &env)).collect();
    let mut r = PlannerResponse::new(dialect, plan);
    if dialect == Dialect::Spine && rng.gen_bool(0.5) {
        r.reasoning = Some("look around first".to_string());
    }
    render_response(&r)
}

fn random_env_for<R: Rng>(rng: &mut R, dialect: Dialect) -> Environment {
    match dialect {
        Dialect::Spine => Environment::SceneGraph(random_graph(rng, 6)),
        d => {
            let cfg = GenConfig { dialect: d, env_size: 6, n_tasks: 1, ..GenConfig::default() };
            procedural_generate(&cfg, rng.gen(), 0).environment
        }
    }
}

const NOISE: &[&str] = &[
    "(",
    ")",
    "[",
    "]",
    "{",
    "}",
    ",",
    "'",
    "\"",
    "\n",
    "```",
    "\\",
    ":",
    "plan",
    "goto(",
    "robot.",
    "Navigation ",
    "\u{0}",
    "é",
    "🤖",
];

/// Mutates a valid response: splices, truncations, duplications, noise
/// tokens, random bytes. Output is capped at `max_len` bytes on a char
/// boundary.
pub fn fuzz_input<R: Rng>(rng: &mut R, dialect: Dialect, max_len: usize) -> String {
    let base = random_response(rng, dialect);
    mutate(rng, base, max_len)
}

/// The mutation half of [`fuzz_input`], for callers with their own corpus.
pub fn mutate<R: Rng>(rng: &mut R, base: String, max_len: usize) -> String {
    let mut s = if rng.gen_bool(0.1) { (0..rng.gen_range(0..200)).map(|_| rng.gen::<char>()).collect() } else { base };
    for _ in 0..rng.gen_range(0..8) {
        let at = floor_char(&s, rng.gen_range(0..=s.len()));
        match rng.gen_range(0..5) {
            0 => s.insert_str(at, NOISE.choose(rng).unwrap()),
            1 => s.truncate(at),
            2 => {
                let end = floor_char(&s, rng.gen_range(at..=s.len()));
                s.replace_range(at..end, "");
            }
            3 => {
                let copy = s.clone();
                s.push_str(&copy);
            }
            _ => s.insert(at, rng.gen::<char>()),
        }
    }
    if rng.gen_bool(0.01) {
        let unit = s.clone() + NOISE.choose(rng).unwrap();
        while s.len() < max_len {
            s.push_str(&unit);
        }
    }
    let cut = floor_char(&s, s.len().min(max_len));
    s.truncate(cut);
    s
}

fn floor_char(s: &str, mut i: usize) -> usize {
    while !s.is_char_boundary(i) {
        i -= 1;
    }
    i
}

/// Parses and, on success, checks that the canonical rendering is stable.
pub fn parse_is_consistent(dialect: Dialect, raw: &str) -> Result<(), String> {
    if let Ok(r) = parse_response(dialect, raw) {
        let canon = render_response(&r);
        match parse_response(dialect, &canon) {
            Ok(back) if back == r => {}
            Ok(back) => return Err(format!("{raw:?} -> {canon:?} -> {back:?}")),
            Err(e) => return Err(format!("canonical form {canon:?} of {raw:?} fails: {e}")),
        }
    }
    Ok(())
}
