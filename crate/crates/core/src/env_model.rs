//! Textual environment representations: scene graphs (regions, objects, and
//! the edges between them) and flat object sets.
//!
//! Both representations serialize to JSON with the key names planners see in
//! their observations (`regions`, `objects`, `region_connections`,
//! `object_connections`, `robot_location`). Parsing is path-aware so schema
//! failures can be fed back to a generator verbatim.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Named tabletop positions an object may be placed at besides another
/// object or a receptacle.
pub const NAMED_POSITIONS: &[&str] = &[
    "middle",
    "table",
    "top left corner",
    "top right corner",
    "bottom left corner",
    "bottom right corner",
    "top side",
    "bottom side",
    "left side",
    "right side",
];

pub type Edge = (String, String);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Node {
    pub name: String,
    /// West-east, south-north; meters.
    pub coords: [f64; 2],
    /// Hidden metadata. Only surfaced to a planner by an inspect or by
    /// mapping the region itself.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

pub type RegionNode = Node;
pub type ObjectNode = Node;

impl Node {
    pub fn new(name: impl Into<String>, coords: [f64; 2]) -> Self {
        Self { name: name.into(), coords, description: None }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = Some(description.into());
        self
    }

    pub fn distance_to(&self, other: &Node) -> f64 {
        let dx = self.coords[0] - other.coords[0];
        let dy = self.coords[1] - other.coords[1];
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Region,
    Object,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Region => "region",
            NodeKind::Object => "object",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneGraph {
    pub regions: Vec<RegionNode>,
    pub objects: Vec<ObjectNode>,
    #[serde(rename = "region_connections")]
    pub region_edges: Vec<Edge>,
    /// `(object, region)` pairs: the object is visible from the region.
    #[serde(rename = "object_connections")]
    pub object_edges: Vec<Edge>,
    pub robot_location: String,
}

/// Orders the endpoints of an undirected region edge.
pub fn canonical_edge(a: &str, b: &str) -> Edge {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl SceneGraph {
    pub fn region(&self, name: &str) -> Option<&RegionNode> {
        self.regions.iter().find(|n| n.name == name)
    }

    pub fn object(&self, name: &str) -> Option<&ObjectNode> {
        self.objects.iter().find(|n| n.name == name)
    }

    pub fn node(&self, name: &str) -> Option<(NodeKind, &Node)> {
        self.region(name).map(|n| (NodeKind::Region, n)).or_else(|| self.object(name).map(|n| (NodeKind::Object, n)))
    }

    pub fn kind_of(&self, name: &str) -> Option<NodeKind> {
        self.node(name).map(|(k, _)| k)
    }

    pub fn node_count(&self) -> usize {
        self.regions.len() + self.objects.len()
    }

    pub fn node_names(&self) -> impl Iterator<Item = &str> {
        self.regions.iter().chain(self.objects.iter()).map(|n| n.name.as_str())
    }

    /// Regions an object is visible from.
    pub fn anchors<'a>(&'a self, object: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.object_edges.iter().filter(move |(o, _)| o == object).map(|(_, r)| r.as_str())
    }

    /// Objects visible from a region.
    pub fn objects_at<'a>(&'a self, region: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.object_edges.iter().filter(move |(_, r)| r == region).map(|(o, _)| o.as_str())
    }

    /// Regions adjacent to `region` in the full edge set, sorted.
    pub fn neighbors(&self, region: &str) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .region_edges
            .iter()
            .filter_map(|(a, b)| {
                if a == region {
                    Some(b.as_str())
                } else if b == region {
                    Some(a.as_str())
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Same graph with every region edge's endpoints ordered.
    pub fn canonical(&self) -> SceneGraph {
        let mut g = self.clone();
        g.region_edges = g.region_edges.iter().map(|(a, b)| canonical_edge(a, b)).collect();
        g
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("scene graph serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ObjectSetEnv {
    pub objects: Vec<String>,
    pub receptacles: Vec<String>,
    /// object -> location (receptacle, another object, or a named position).
    pub placements: BTreeMap<String, String>,
}

impl ObjectSetEnv {
    pub fn contains(&self, name: &str) -> bool {
        self.objects.iter().any(|o| o == name) || self.receptacles.iter().any(|r| r == name)
    }

    /// Objects followed by receptacles, the order planners see them in.
    pub fn items(&self) -> impl Iterator<Item = &str> {
        self.objects.iter().chain(self.receptacles.iter()).map(String::as_str)
    }

    pub fn is_valid_location(&self, location: &str) -> bool {
        self.contains(location) || NAMED_POSITIONS.contains(&location)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Environment {
    SceneGraph(SceneGraph),
    ObjectSet(ObjectSetEnv),
}

impl Environment {
    pub fn validate(&self) -> Vec<Violation> {
        match self {
            Environment::SceneGraph(g) => validate_graph(g),
            Environment::ObjectSet(s) => validate_object_set(s),
        }
    }

    pub fn as_scene_graph(&self) -> Option<&SceneGraph> {
        match self {
            Environment::SceneGraph(g) => Some(g),
            Environment::ObjectSet(_) => None,
        }
    }

    pub fn as_object_set(&self) -> Option<&ObjectSetEnv> {
        match self {
            Environment::ObjectSet(s) => Some(s),
            Environment::SceneGraph(_) => None,
        }
    }

    /// Regions + objects for graphs; objects + receptacles for sets.
    pub fn size(&self) -> usize {
        match self {
            Environment::SceneGraph(g) => g.node_count(),
            Environment::ObjectSet(s) => s.objects.len() + s.receptacles.len(),
        }
    }

    pub fn contains_name(&self, name: &str) -> bool {
        match self {
            Environment::SceneGraph(g) => g.node(name).is_some(),
            Environment::ObjectSet(s) => s.contains(name),
        }
    }
}

impl<'de> Deserialize<'de> for Environment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        parse_environment_value(&v).map_err(serde::de::Error::custom)
    }
}

impl<'de> Deserialize<'de> for SceneGraph {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        scene_graph_from_value(&v, "").map_err(serde::de::Error::custom)
    }
}

impl<'de> Deserialize<'de> for ObjectSetEnv {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        object_set_from_value(&v, "").map_err(serde::de::Error::custom)
    }
}

impl<'de> Deserialize<'de> for Node {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        node_from_value(&v, "").map_err(serde::de::Error::custom)
    }
}

/// A broken environment invariant. Violations are data, not failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    EmptyName { kind: NodeKind, index: usize },
    DuplicateName { name: String },
    ReservedCharacter { name: String },
    NonFiniteCoords { name: String },
    UnknownEndpoint { name: String },
    WrongEndpointKind { name: String, expected: NodeKind },
    SelfLoop { name: String },
    DuplicateEdge { a: String, b: String },
    RobotNotInRegion { name: String },
    UnknownPlacementObject { name: String },
    UnknownLocation { object: String, location: String },
    SelfPlacement { name: String },
    PlacementCycle { name: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyName { kind, index } => write!(f, "{kind} #{index} has an empty name"),
            Violation::DuplicateName { name } => write!(f, "node name {name} is declared more than once"),
            Violation::ReservedCharacter { name } => {
                write!(f, "node name {name:?} contains one of the reserved characters {RESERVED_NAME_CHARS:?}")
            }
            Violation::NonFiniteCoords { name } => write!(f, "node {name} has non-finite coordinates"),
            Violation::UnknownEndpoint { name } => {
                write!(f, "connection references undeclared node {name}")
            }
            Violation::WrongEndpointKind { name, expected } => {
                write!(f, "connection endpoint {name} should be a {expected} node")
            }
            Violation::SelfLoop { name } => write!(f, "region {name} is connected to itself"),
            Violation::DuplicateEdge { a, b } => write!(f, "connection [{a}, {b}] is listed twice"),
            Violation::RobotNotInRegion { name } => {
                write!(f, "robot_location {name} is not a declared region")
            }
            Violation::UnknownPlacementObject { name } => {
                write!(f, "placement for undeclared object {name}")
            }
            Violation::UnknownLocation { object, location } => {
                write!(f, "{object} is placed at unknown location {location}")
            }
            Violation::SelfPlacement { name } => write!(f, "{name} is placed on itself"),
            Violation::PlacementCycle { name } => write!(f, "placement chain through {name} is cyclic"),
        }
    }
}

/// Characters that would make a name ambiguous inside action calls and
/// observation deltas.
pub const RESERVED_NAME_CHARS: &str = "()[]{},:\"'\n";

fn has_reserved_char(name: &str) -> bool {
    name.chars().any(|c| RESERVED_NAME_CHARS.contains(c))
}

pub fn validate_graph(g: &SceneGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut kinds: HashMap<&str, NodeKind> = HashMap::new();

    for (kind, nodes) in [(NodeKind::Region, &g.regions), (NodeKind::Object, &g.objects)] {
        for (index, n) in nodes.iter().enumerate() {
            if n.name.trim().is_empty() {
                out.push(Violation::EmptyName { kind, index });
                continue;
            }
            if has_reserved_char(&n.name) {
                out.push(Violation::ReservedCharacter { name: n.name.clone() });
            }
            if kinds.insert(n.name.as_str(), kind).is_some() {
                out.push(Violation::DuplicateName { name: n.name.clone() });
            }
            if !n.coords.iter().all(|c| c.is_finite()) {
                out.push(Violation::NonFiniteCoords { name: n.name.clone() });
            }
        }
    }

    let check_endpoint = |name: &str, expected: NodeKind, out: &mut Vec<Violation>| -> bool {
        match kinds.get(name) {
            None => {
                out.push(Violation::UnknownEndpoint { name: name.to_string() });
                false
            }
            Some(k) if *k != expected => {
                out.push(Violation::WrongEndpointKind { name: name.to_string(), expected });
                false
            }
            Some(_) => true,
        }
    };

    let mut seen: HashSet<Edge> = HashSet::new();
    for (a, b) in &g.region_edges {
        let ok_a = check_endpoint(a, NodeKind::Region, &mut out);
        let ok_b = check_endpoint(b, NodeKind::Region, &mut out);
        if !(ok_a && ok_b) {
            continue;
        }
        if a == b {
            out.push(Violation::SelfLoop { name: a.clone() });
            continue;
        }
        let e = canonical_edge(a, b);
        if !seen.insert(e.clone()) {
            out.push(Violation::DuplicateEdge { a: e.0, b: e.1 });
        }
    }

    let mut seen_obj: HashSet<&Edge> = HashSet::new();
    for e in &g.object_edges {
        let ok_o = check_endpoint(&e.0, NodeKind::Object, &mut out);
        let ok_r = check_endpoint(&e.1, NodeKind::Region, &mut out);
        if ok_o && ok_r && !seen_obj.insert(e) {
            out.push(Violation::DuplicateEdge { a: e.0.clone(), b: e.1.clone() });
        }
    }

    if kinds.get(g.robot_location.as_str()) != Some(&NodeKind::Region) {
        out.push(Violation::RobotNotInRegion { name: g.robot_location.clone() });
    }
    out
}

pub fn validate_object_set(s: &ObjectSetEnv) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut names: HashSet<&str> = HashSet::new();
    for (kind_index, list) in [&s.objects, &s.receptacles].into_iter().enumerate() {
        for (index, n) in list.iter().enumerate() {
            if n.trim().is_empty() {
                // Object sets have no region/object split; report receptacles as regions.
                let kind = if kind_index == 0 { NodeKind::Object } else { NodeKind::Region };
                out.push(Violation::EmptyName { kind, index });
            } else if !names.insert(n.as_str()) {
                out.push(Violation::DuplicateName { name: n.clone() });
            }
            if has_reserved_char(n) {
                out.push(Violation::ReservedCharacter { name: n.clone() });
            }
        }
    }
    for (object, location) in &s.placements {
        if !s.objects.contains(object) {
            out.push(Violation::UnknownPlacementObject { name: object.clone() });
        }
        if object == location {
            out.push(Violation::SelfPlacement { name: object.clone() });
        } else if !s.is_valid_location(location) {
            out.push(Violation::UnknownLocation { object: object.clone(), location: location.clone() });
        }
    }
    if let Some(name) = placement_cycle(&s.placements) {
        out.push(Violation::PlacementCycle { name });
    }
    out
}

/// First object (in key order) that lies on a cyclic placement chain.
pub fn placement_cycle(placements: &BTreeMap<String, String>) -> Option<String> {
    for start in placements.keys() {
        let mut cur = start;
        let mut steps = 0;
        while let Some(next) = placements.get(cur) {
            if next == cur {
                break;
            }
            if next == start {
                return Some(start.clone());
            }
            cur = next;
            steps += 1;
            if steps > placements.len() {
                break;
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("unknown region {0}")]
    UnknownRegion(String),
    #[error("radius must be a non-negative number, got {0}")]
    InvalidRadius(String),
}

/// Breadth-first closure of `from` under the given region edges (treated
/// as undirected). Always contains `from`.
pub fn reachable_regions<'a, I>(g: &SceneGraph, from: &str, edges: I) -> Result<BTreeSet<String>, EnvError>
where
    I: IntoIterator<Item = &'a Edge>,
{
    if g.region(from).is_none() {
        return Err(EnvError::UnknownRegion(from.to_string()));
    }
    let adj = adjacency(edges);
    Ok(bfs_closure(&adj, from))
}

fn adjacency<'a, I>(edges: I) -> HashMap<&'a str, Vec<&'a str>>
where
    I: IntoIterator<Item = &'a Edge>,
{
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

fn bfs_closure(adj: &HashMap<&str, Vec<&str>>, from: &str) -> BTreeSet<String> {
    let mut seen: BTreeSet<String> = BTreeSet::new();
    seen.insert(from.to_string());
    let mut queue = VecDeque::from([from.to_string()]);
    while let Some(cur) = queue.pop_front() {
        if let Some(ns) = adj.get(cur.as_str()) {
            for n in ns {
                if seen.insert(n.to_string()) {
                    queue.push_back(n.to_string());
                }
            }
        }
    }
    seen
}

/// Shortest path (by hop count) between two regions over the given edges,
/// inclusive of both ends. Ties resolve to the lexicographically smallest
/// neighbor so the result is deterministic.
pub fn region_path<'a, I>(edges: I, from: &str, to: &str) -> Option<Vec<String>>
where
    I: IntoIterator<Item = &'a Edge>,
{
    if from == to {
        return Some(vec![from.to_string()]);
    }
    let adj = adjacency(edges);
    let mut parent: HashMap<&str, &str> = HashMap::new();
    let mut queue = VecDeque::from([from]);
    let mut seen: HashSet<&str> = HashSet::from([from]);
    while let Some(cur) = queue.pop_front() {
        for &n in adj.get(cur).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(n) {
                parent.insert(n, cur);
                if n == to {
                    let mut path = vec![to.to_string()];
                    let mut at = to;
                    while let Some(&p) = parent.get(at) {
                        path.push(p.to_string());
                        at = p;
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(n);
            }
        }
    }
    None
}

/// Hop distance from every region to the nearest of `sources`.
pub fn hop_distances<'a, I>(edges: I, sources: &[&str]) -> HashMap<String, usize>
where
    I: IntoIterator<Item = &'a Edge>,
{
    let adj = adjacency(edges);
    let mut dist: HashMap<String, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    for s in sources {
        if !dist.contains_key(*s) {
            dist.insert(s.to_string(), 0);
            queue.push_back(s.to_string());
        }
    }
    while let Some(cur) = queue.pop_front() {
        let d = dist[&cur];
        for n in adj.get(cur.as_str()).map(Vec::as_slice).unwrap_or(&[]) {
            if !dist.contains_key(*n) {
                dist.insert(n.to_string(), d + 1);
                queue.push_back(n.to_string());
            }
        }
    }
    dist
}

/// All regions and objects within Euclidean `radius` of `center`, excluding
/// `center` itself.
pub fn nodes_within_radius(g: &SceneGraph, center: &str, radius: f64) -> Result<BTreeSet<String>, EnvError> {
    let c = g.region(center).ok_or_else(|| EnvError::UnknownRegion(center.to_string()))?;
    if radius.is_nan() || radius < 0.0 {
        return Err(EnvError::InvalidRadius(radius.to_string()));
    }
    Ok(g.regions
        .iter()
        .chain(g.objects.iter())
        .filter(|n| n.name != center && c.distance_to(n) <= radius)
        .map(|n| n.name.clone())
        .collect())
}

/// Schema failure with the JSON path of the first offending field.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("schema error at {path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl SchemaError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        let path = path.into();
        Self { path: if path.is_empty() { "/".to_string() } else { path }, message: message.into() }
    }
}

pub fn parse_environment(text: &str) -> Result<Environment, SchemaError> {
    let v: Value = serde_json::from_str(text).map_err(|e| SchemaError::new("/", format!("malformed JSON: {e}")))?;
    parse_environment_value(&v)
}

/// Object sets are recognized by a `receptacles` or `placements` key, or by
/// an `objects` list of plain strings with no `regions`; anything else must
/// be a scene graph.
pub fn parse_environment_value(v: &Value) -> Result<Environment, SchemaError> {
    parse_environment_at(v, "")
}

pub(crate) fn parse_environment_at(v: &Value, base: &str) -> Result<Environment, SchemaError> {
    let obj = v.as_object().ok_or_else(|| SchemaError::new(base, "expected a JSON object"))?;
    let looks_like_set = obj.contains_key("receptacles")
        || obj.contains_key("placements")
        || (!obj.contains_key("regions")
            && obj.get("objects").and_then(Value::as_array).is_some_and(|a| a.iter().all(Value::is_string)));
    if looks_like_set {
        object_set_from_value(v, base).map(Environment::ObjectSet)
    } else {
        scene_graph_from_value(v, base).map(Environment::SceneGraph)
    }
}

pub fn serialize_environment(env: &Environment) -> String {
    serde_json::to_string(env).expect("environment serializes")
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, base: &str) -> Result<&'a Value, SchemaError> {
    obj.get(key).ok_or_else(|| SchemaError::new(format!("{base}/{key}"), "missing required key"))
}

fn array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>, SchemaError> {
    v.as_array().ok_or_else(|| SchemaError::new(path, "expected an array"))
}

fn ident(v: &Value, path: &str) -> Result<String, SchemaError> {
    let s = v.as_str().ok_or_else(|| SchemaError::new(path, "expected a string"))?.trim();
    if s.is_empty() {
        return Err(SchemaError::new(path, "empty identifier"));
    }
    Ok(s.to_string())
}

fn coord(v: &Value, path: &str) -> Result<f64, SchemaError> {
    let x = match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    }
    .ok_or_else(|| SchemaError::new(path, "expected a number"))?;
    if !x.is_finite() {
        return Err(SchemaError::new(path, "coordinate is not finite"));
    }
    Ok(x)
}

fn node_from_value(v: &Value, path: &str) -> Result<Node, SchemaError> {
    let obj = v.as_object().ok_or_else(|| SchemaError::new(path, "expected a node object"))?;
    let name = ident(field(obj, "name", path)?, &format!("{path}/name"))?;
    let cpath = format!("{path}/coords");
    let cs = array(field(obj, "coords", path)?, &cpath)?;
    if cs.len() != 2 {
        return Err(SchemaError::new(&cpath, "expected exactly two coordinates"));
    }
    let coords = [coord(&cs[0], &format!("{cpath}/0"))?, coord(&cs[1], &format!("{cpath}/1"))?];
    let description = match obj.get("description") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(SchemaError::new(format!("{path}/description"), "expected a string")),
    };
    Ok(Node { name, coords, description })
}

fn pairs(v: &Value, path: &str) -> Result<Vec<Edge>, SchemaError> {
    array(v, path)?
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let p = format!("{path}/{i}");
            let items = array(e, &p)?;
            if items.len() != 2 {
                return Err(SchemaError::new(&p, "expected a pair of names"));
            }
            Ok((ident(&items[0], &format!("{p}/0"))?, ident(&items[1], &format!("{p}/1"))?))
        })
        .collect()
}

pub(crate) fn scene_graph_from_value(v: &Value, base: &str) -> Result<SceneGraph, SchemaError> {
    let obj = v.as_object().ok_or_else(|| SchemaError::new(base, "expected a JSON object"))?;
    let nodes = |key: &str| -> Result<Vec<Node>, SchemaError> {
        let p = format!("{base}/{key}");
        array(field(obj, key, base)?, &p)?
            .iter()
            .enumerate()
            .map(|(i, n)| node_from_value(n, &format!("{p}/{i}")))
            .collect()
    };
    let regions = nodes("regions")?;
    let objects = nodes("objects")?;
    let region_edges = pairs(field(obj, "region_connections", base)?, &format!("{base}/region_connections"))?;
    let object_edges = pairs(field(obj, "object_connections", base)?, &format!("{base}/object_connections"))?;
    let robot_location = ident(field(obj, "robot_location", base)?, &format!("{base}/robot_location"))?;
    Ok(SceneGraph { regions, objects, region_edges, object_edges, robot_location })
}

pub(crate) fn object_set_from_value(v: &Value, base: &str) -> Result<ObjectSetEnv, SchemaError> {
    let obj = v.as_object().ok_or_else(|| SchemaError::new(base, "expected a JSON object"))?;
    let names = |key: &str, required: bool| -> Result<Vec<String>, SchemaError> {
        let p = format!("{base}/{key}");
        match obj.get(key) {
            None if !required => Ok(Vec::new()),
            None => Err(SchemaError::new(p, "missing required key")),
            Some(v) => array(v, &p)?.iter().enumerate().map(|(i, s)| ident(s, &format!("{p}/{i}"))).collect(),
        }
    };
    let objects = names("objects", true)?;
    let receptacles = names("receptacles", false)?;
    let mut placements = BTreeMap::new();
    if let Some(p) = obj.get("placements") {
        let path = format!("{base}/placements");
        let m =
            p.as_object().ok_or_else(|| SchemaError::new(&path, "expected an object mapping object to location"))?;
        for (k, loc) in m {
            let key = k.trim();
            if key.is_empty() {
                return Err(SchemaError::new(&path, "empty object name"));
            }
            placements.insert(key.to_string(), ident(loc, &format!("{path}/{key}"))?);
        }
    }
    Ok(ObjectSetEnv { objects, receptacles, placements })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE_GRAPH: &str = include_str!("../tests/fixtures/example_graph.json");
    const BOARDWALK: &str = include_str!("../tests/fixtures/boardwalk_generation.json");

    fn example() -> SceneGraph {
        match parse_environment(EXAMPLE_GRAPH).unwrap() {
            Environment::SceneGraph(g) => g,
            other => panic!("expected scene graph, got {other:?}"),
        }
    }

    fn boardwalk() -> SceneGraph {
        let v: Value = serde_json::from_str(BOARDWALK).unwrap();
        scene_graph_from_value(&v["graph"], "/graph").unwrap()
    }

    #[test]
    fn example_graph_is_valid() {
        let g = example();
        assert_eq!(g.regions.len(), 9);
        assert_eq!(g.objects.len(), 2);
        assert_eq!(g.region_edges.len(), 8);
        assert_eq!(validate_graph(&g), vec![]);
        assert_eq!(g.object("gate_1").unwrap().coords, [52.0, -56.0]);
    }

    #[test]
    fn undeclared_endpoint_is_reported() {
        let mut g = example();
        g.region_edges.push(("road_1".into(), "road_9".into()));
        assert_eq!(validate_graph(&g), vec![Violation::UnknownEndpoint { name: "road_9".into() }]);
    }

    #[test]
    fn robot_on_object_is_reported() {
        let mut g = example();
        g.robot_location = "shed_1".into();
        assert_eq!(validate_graph(&g), vec![Violation::RobotNotInRegion { name: "shed_1".into() }]);
    }

    #[test]
    fn reversed_duplicate_edge_and_self_loop() {
        let mut g = example();
        g.region_edges.push(("road_1".into(), "ground_1".into()));
        g.region_edges.push(("road_2".into(), "road_2".into()));
        let v = validate_graph(&g);
        assert!(v.contains(&Violation::DuplicateEdge { a: "ground_1".into(), b: "road_1".into() }));
        assert!(v.contains(&Violation::SelfLoop { name: "road_2".into() }));
    }

    #[test]
    fn reach_from_ground_covers_chain() {
        let g = example();
        let all = reachable_regions(&g, "ground_1", &g.region_edges).unwrap();
        assert_eq!(all.len(), 9);
        let none = reachable_regions(&g, "road_3", &[]).unwrap();
        assert_eq!(none, BTreeSet::from(["road_3".to_string()]));
        assert_eq!(reachable_regions(&g, "nowhere", &g.region_edges), Err(EnvError::UnknownRegion("nowhere".into())));
    }

    #[test]
    fn path_to_road_6() {
        let g = example();
        let p = region_path(&g.region_edges, "ground_1", "road_6").unwrap();
        assert_eq!(p, ["ground_1", "road_1", "road_2", "road_3", "road_4", "road_5", "bridge_1", "road_6"]);
    }

    // Distances from boardwalk_2 at (10, 10), computed by hand:
    // lamppost_1 (10,12) -> 2, bench_1 (5,10) -> 5, bench_2 (15,10) -> 5,
    // palm_tree_1 (5,15) -> 7.07, four regions at exactly 10.
    #[test]
    fn radius_around_boardwalk_2() {
        let g = boardwalk();
        assert_eq!(nodes_within_radius(&g, "boardwalk_2", 0.0).unwrap(), BTreeSet::new());
        assert_eq!(nodes_within_radius(&g, "boardwalk_2", 3.0).unwrap(), BTreeSet::from(["lamppost_1".to_string()]));
        assert_eq!(
            nodes_within_radius(&g, "boardwalk_2", 5.0).unwrap(),
            BTreeSet::from(["bench_1".to_string(), "bench_2".to_string(), "lamppost_1".to_string()])
        );
        assert_eq!(nodes_within_radius(&g, "boardwalk_2", 10.0).unwrap().len(), 8);
        assert!(nodes_within_radius(&g, "boardwalk_2", -1.0).is_err());
    }

    #[test]
    fn empty_object_is_missing_regions() {
        let e = parse_environment("{}").unwrap_err();
        assert_eq!(e.path, "/regions");
        let e = parse_environment(r#"{"regions": [{"name": "a", "coords": [0, "x"]}]}"#).unwrap_err();
        assert_eq!(e.path, "/regions/0/coords/1");
    }

    #[test]
    fn serialization_uses_observation_keys() {
        let g = example();
        let s = serialize_environment(&Environment::SceneGraph(g.clone()));
        let v: Value = serde_json::from_str(&s).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        for k in ["regions", "objects", "region_connections", "object_connections", "robot_location"] {
            assert!(keys.contains(&k.to_string()), "missing {k}");
        }
        assert_eq!(parse_environment(&s).unwrap(), Environment::SceneGraph(g));
    }

    #[test]
    fn object_set_parsing_and_validation() {
        let env = parse_environment(
            r#"{"objects": ["red block", "blue block"], "receptacles": ["red bowl"],
                "placements": {"red block": "red bowl", "blue block": "middle"}}"#,
        )
        .unwrap();
        assert_eq!(env.validate(), vec![]);
        let mut s = env.as_object_set().unwrap().clone();
        s.placements.insert("red block".into(), "blue block".into());
        s.placements.insert("blue block".into(), "red block".into());
        assert!(validate_object_set(&s).iter().any(|v| matches!(v, Violation::PlacementCycle { .. })));
        s.placements.insert("blue block".into(), "blue block".into());
        assert!(validate_object_set(&s).contains(&Violation::SelfPlacement { name: "blue block".into() }));
    }
}
