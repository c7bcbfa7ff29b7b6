//! Hides part of an environment so a planner has something to discover.
//!
//! For scene graphs, regions and objects are sampled separately so both
//! kinds are hidden in proportion, then the visible region set is repaired
//! until every visible region is reachable from the robot through visible
//! edges. The hidden part keeps original indices so the full environment
//! can be rebuilt exactly.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::Dialect;
use crate::env_model::{Edge, Environment, Node, ObjectSetEnv, SceneGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Indexed<T> {
    pub index: usize,
    pub item: T,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HiddenPart {
    pub regions: Vec<Indexed<Node>>,
    pub objects: Vec<Indexed<Node>>,
    pub region_edges: Vec<Indexed<Edge>>,
    pub object_edges: Vec<Indexed<Edge>>,
    /// Object-set items.
    pub set_objects: Vec<Indexed<String>>,
    pub placements: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedEnvironment {
    pub visible: Environment,
    pub hidden: HiddenPart,
    pub mask_seed: u64,
    pub mask_fraction: f64,
}

impl MaskedEnvironment {
    pub fn hidden_nodes(&self) -> BTreeSet<String> {
        self.hidden
            .regions
            .iter()
            .chain(self.hidden.objects.iter())
            .map(|n| n.item.name.clone())
            .chain(self.hidden.set_objects.iter().map(|o| o.item.clone()))
            .collect()
    }

    pub fn hidden_edges(&self) -> BTreeSet<Edge> {
        self.hidden.region_edges.iter().chain(self.hidden.object_edges.iter()).map(|e| e.item.clone()).collect()
    }

    /// Inverse of masking: visible and hidden parts merged back in their
    /// original order.
    pub fn reconstruct(&self) -> Environment {
        let h = &self.hidden;
        match &self.visible {
            Environment::SceneGraph(v) => Environment::SceneGraph(SceneGraph {
                regions: merge(&v.regions, &h.regions),
                objects: merge(&v.objects, &h.objects),
                region_edges: merge(&v.region_edges, &h.region_edges),
                object_edges: merge(&v.object_edges, &h.object_edges),
                robot_location: v.robot_location.clone(),
            }),
            Environment::ObjectSet(v) => {
                let mut placements = v.placements.clone();
                placements.extend(h.placements.iter().map(|(k, l)| (k.clone(), l.clone())));
                Environment::ObjectSet(ObjectSetEnv {
                    objects: merge(&v.objects, &h.set_objects),
                    receptacles: v.receptacles.clone(),
                    placements,
                })
            }
        }
    }
}

fn merge<T: Clone>(visible: &[T], hidden: &[Indexed<T>]) -> Vec<T> {
    let total = visible.len() + hidden.len();
    let mut out = Vec::with_capacity(total);
    let mut v = visible.iter();
    let mut h = hidden.iter().peekable();
    for i in 0..total {
        match h.peek() {
            Some(x) if x.index == i => out.push(h.next().expect("peeked").item.clone()),
            _ => out.extend(v.next().cloned()),
        }
    }
    out
}

fn split<T: Clone>(items: &[T], hide: impl Fn(&T) -> bool) -> (Vec<T>, Vec<Indexed<T>>) {
    let mut visible = Vec::new();
    let mut hidden = Vec::new();
    for (index, it) in items.iter().enumerate() {
        if hide(it) {
            hidden.push(Indexed { index, item: it.clone() });
        } else {
            visible.push(it.clone());
        }
    }
    (visible, hidden)
}

fn ceil_frac(f: f64, n: usize) -> usize {
    ((f * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Deterministic in `(env, fraction, seed)`. `fraction` is clamped to
/// `[0, 1]`; non-finite values count as 0.
pub fn mask_environment(env: &Environment, fraction: f64, seed: u64) -> MaskedEnvironment {
    let f = if fraction.is_finite() { fraction.clamp(0.0, 1.0) } else { 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (visible, hidden) = match env {
        Environment::SceneGraph(g) => {
            let (v, h) = mask_graph(g, f, &mut rng);
            (Environment::SceneGraph(v), h)
        }
        Environment::ObjectSet(s) => {
            let (v, h) = mask_set(s, f, &mut rng);
            (Environment::ObjectSet(v), h)
        }
    };
    MaskedEnvironment { visible, hidden, mask_seed: seed, mask_fraction: f }
}

fn mask_graph(g: &SceneGraph, f: f64, rng: &mut ChaCha8Rng) -> (SceneGraph, HiddenPart) {
    let robot = g.robot_location.as_str();
    let candidates: Vec<&str> = g.regions.iter().map(|r| r.name.as_str()).filter(|r| *r != robot).collect();
    let n = g.node_count();
    let k_total = ceil_frac(f, n.saturating_sub(1));
    let k_r = ceil_frac(f, candidates.len()).min(candidates.len()).min(k_total);
    let k_o = k_total.saturating_sub(k_r).min(g.objects.len());

    let mut hidden_regions: BTreeSet<&str> =
        sample(rng, candidates.len(), k_r).into_iter().map(|i| candidates[i]).collect();
    let mut hidden_objects: BTreeSet<&str> =
        sample(rng, g.objects.len(), k_o).into_iter().map(|i| g.objects[i].name.as_str()).collect();

    let full_adj = adjacency(&g.region_edges);
    repair_connectivity(g, &full_adj, &mut hidden_regions);
    if f > 0.0 && !candidates.is_empty() && hidden_regions.is_empty() {
        // Keep at least one region to discover. The deepest region is never
        // on another region's shortest path, so hiding it keeps the rest
        // connected.
        let depth = bfs_depths(&full_adj, &[robot]);
        if let Some(r) = candidates
            .iter()
            .filter(|r| depth.contains_key(**r))
            .max_by(|a, b| depth[**a].cmp(&depth[**b]).then_with(|| b.cmp(a)))
        {
            hidden_regions.insert(r);
        }
    }

    // Objects seen only from hidden regions go with them.
    for o in &g.objects {
        let mut anchors = g.anchors(&o.name).peekable();
        if anchors.peek().is_some() && anchors.all(|r| hidden_regions.contains(r)) {
            hidden_objects.insert(o.name.as_str());
        }
    }

    let hidden_node = |name: &str| hidden_regions.contains(name) || hidden_objects.contains(name);
    let (regions, h_regions) = split(&g.regions, |n| hidden_regions.contains(n.name.as_str()));
    let (objects, h_objects) = split(&g.objects, |n| hidden_objects.contains(n.name.as_str()));
    let (region_edges, h_redges) = split(&g.region_edges, |(a, b)| hidden_node(a) || hidden_node(b));
    let (object_edges, h_oedges) = split(&g.object_edges, |(a, b)| hidden_node(a) || hidden_node(b));
    (
        SceneGraph { regions, objects, region_edges, object_edges, robot_location: g.robot_location.clone() },
        HiddenPart {
            regions: h_regions,
            objects: h_objects,
            region_edges: h_redges,
            object_edges: h_oedges,
            ..HiddenPart::default()
        },
    )
}

fn adjacency(edges: &[Edge]) -> HashMap<&str, Vec<&str>> {
    let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
    for (a, b) in edges {
        adj.entry(a.as_str()).or_default().push(b.as_str());
        adj.entry(b.as_str()).or_default().push(a.as_str());
    }
    for v in adj.values_mut() {
        v.sort_unstable();
        v.dedup();
    }
    adj
}

fn bfs_depths<'a>(adj: &HashMap<&'a str, Vec<&'a str>>, sources: &[&'a str]) -> HashMap<&'a str, usize> {
    let mut depth: HashMap<&str, usize> = sources.iter().map(|s| (*s, 0)).collect();
    let mut q: VecDeque<&str> = sources.iter().copied().collect();
    while let Some(cur) = q.pop_front() {
        let d = depth[cur];
        for &n in adj.get(cur).map(Vec::as_slice).unwrap_or(&[]) {
            if !depth.contains_key(n) {
                depth.insert(n, d + 1);
                q.push_back(n);
            }
        }
    }
    depth
}

/// Un-hides regions along a shortest full-graph path to each stranded
/// visible region; regions with no path at all are hidden instead.
fn repair_connectivity<'a>(
    g: &'a SceneGraph,
    full_adj: &HashMap<&'a str, Vec<&'a str>>,
    hidden: &mut BTreeSet<&'a str>,
) {
    let robot = g.robot_location.as_str();
    loop {
        let mut reach: BTreeSet<&str> = BTreeSet::from([robot]);
        let mut q = VecDeque::from([robot]);
        while let Some(cur) = q.pop_front() {
            for &n in full_adj.get(cur).map(Vec::as_slice).unwrap_or(&[]) {
                if !hidden.contains(n) && reach.insert(n) {
                    q.push_back(n);
                }
            }
        }
        let stranded: BTreeSet<&str> =
            g.regions.iter().map(|r| r.name.as_str()).filter(|r| !hidden.contains(r) && !reach.contains(r)).collect();
        if stranded.is_empty() {
            return;
        }
        // Multi-source BFS over the full graph from the reachable set.
        let mut parent: HashMap<&str, &str> = HashMap::new();
        let mut seen: BTreeSet<&str> = reach.clone();
        let mut q: VecDeque<&str> = reach.iter().copied().collect();
        let mut found = None;
        'bfs: while let Some(cur) = q.pop_front() {
            for &n in full_adj.get(cur).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(n) {
                    parent.insert(n, cur);
                    if stranded.contains(n) {
                        found = Some(n);
                        break 'bfs;
                    }
                    q.push_back(n);
                }
            }
        }
        match found {
            Some(target) => {
                let mut at = target;
                while let Some(&p) = parent.get(at) {
                    hidden.remove(p);
                    at = p;
                }
            }
            None => hidden.extend(stranded),
        }
    }
}

fn mask_set(s: &ObjectSetEnv, f: f64, rng: &mut ChaCha8Rng) -> (ObjectSetEnv, HiddenPart) {
    let k = ceil_frac(f, s.objects.len()).min(s.objects.len());
    let mut hidden: BTreeSet<&str> =
        sample(rng, s.objects.len(), k).into_iter().map(|i| s.objects[i].as_str()).collect();
    // Anything resting on a hidden object is hidden too.
    loop {
        let before = hidden.len();
        for (o, loc) in &s.placements {
            if hidden.contains(loc.as_str()) && s.objects.contains(o) {
                hidden.insert(o.as_str());
            }
        }
        if hidden.len() == before {
            break;
        }
    }
    let (objects, set_objects) = split(&s.objects, |o| hidden.contains(o.as_str()));
    let (placements, h_placements): (BTreeMap<_, _>, BTreeMap<_, _>) =
        s.placements.iter().map(|(k, v)| (k.clone(), v.clone())).partition(|(k, _)| !hidden.contains(k.as_str()));
    (
        ObjectSetEnv { objects, receptacles: s.receptacles.clone(), placements },
        HiddenPart { set_objects, placements: h_placements, ..HiddenPart::default() },
    )
}

#[derive(Serialize)]
struct NodeView<'a> {
    name: &'a str,
    coords: [f64; 2],
}

#[derive(Serialize)]
struct GraphView<'a> {
    regions: Vec<NodeView<'a>>,
    objects: Vec<NodeView<'a>>,
    region_connections: &'a [Edge],
    object_connections: &'a [Edge],
    robot_location: &'a str,
}

/// What a planner is shown of an environment: graphs as compact JSON
/// without descriptions, object sets as a dialect-specific list.
pub fn render_observation(env: &Environment, dialect: Dialect) -> String {
    match env {
        Environment::SceneGraph(g) => {
            fn view(ns: &[Node]) -> Vec<NodeView<'_>> {
                ns.iter().map(|n| NodeView { name: &n.name, coords: n.coords }).collect()
            }
            let v = GraphView {
                regions: view(&g.regions),
                objects: view(&g.objects),
                region_connections: &g.region_edges,
                object_connections: &g.object_edges,
                robot_location: &g.robot_location,
            };
            serde_json::to_string(&v).expect("graph view serializes")
        }
        Environment::ObjectSet(s) => {
            let items: Vec<&str> = s.items().collect();
            match dialect {
                Dialect::LlmPlanner => format!("Visible objects: {}", items.join(", ")),
                _ => format!("objects = [{}]", items.join(", ")),
            }
        }
    }
}

pub fn initial_observation(m: &MaskedEnvironment, dialect: Dialect) -> String {
    render_observation(&m.visible, dialect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_model::{parse_environment, reachable_regions};

    fn example() -> Environment {
        parse_environment(include_str!("../tests/fixtures/example_graph.json")).unwrap()
    }

    #[test]
    fn zero_and_full_fractions() {
        let env = example();
        let m0 = mask_environment(&env, 0.0, 3);
        assert_eq!(m0.visible, env);
        assert!(m0.hidden_nodes().is_empty());
        let m1 = mask_environment(&env, 1.0, 3);
        let g = m1.visible.as_scene_graph().unwrap();
        assert_eq!(g.regions.len(), 1);
        assert!(g.objects.is_empty());
        assert_eq!(m1.reconstruct(), env);
    }

    #[test]
    fn visible_part_stays_connected() {
        let env = example();
        for seed in 0..200 {
            let m = mask_environment(&env, 0.4, seed);
            let g = m.visible.as_scene_graph().unwrap();
            assert!(env_model_valid(g));
            let reach = reachable_regions(g, &g.robot_location, &g.region_edges).unwrap();
            assert_eq!(reach.len(), g.regions.len(), "seed {seed}");
            assert!(!m.hidden.regions.is_empty(), "seed {seed}");
            assert_eq!(m.reconstruct(), env);
        }
    }

    fn env_model_valid(g: &SceneGraph) -> bool {
        crate::env_model::validate_graph(g).is_empty()
    }

    #[test]
    fn object_sets_cascade() {
        let s = ObjectSetEnv {
            objects: vec!["a".into(), "b".into(), "c".into()],
            receptacles: vec!["bowl".into()],
            placements: [("b".to_string(), "a".to_string()), ("c".to_string(), "bowl".to_string())]
                .into_iter()
                .collect(),
        };
        let env = Environment::ObjectSet(s);
        for seed in 0..50 {
            let m = mask_environment(&env, 0.34, seed);
            let hidden = m.hidden_nodes();
            if hidden.contains("a") {
                assert!(hidden.contains("b"));
            }
            assert!(!hidden.contains("bowl"));
            assert_eq!(m.reconstruct(), env);
        }
    }

    #[test]
    fn observation_formats() {
        let env = example();
        let obs = initial_observation(&mask_environment(&env, 0.0, 0), Dialect::Spine);
        assert!(obs.starts_with("{\"regions\":[{\"name\":\"ground_1\",\"coords\":[0.0,0.0]}"));
        assert!(!obs.contains("description"));
        let set = Environment::ObjectSet(ObjectSetEnv {
            objects: vec!["red block".into()],
            receptacles: vec!["red bowl".into()],
            placements: BTreeMap::new(),
        });
        assert_eq!(render_observation(&set, Dialect::SayCan), "objects = [red block, red bowl]");
        assert_eq!(render_observation(&set, Dialect::LlmPlanner), "Visible objects: red block, red bowl");
    }
}
