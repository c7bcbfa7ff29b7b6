//! Deterministic world emulator. Executes planner actions against the full
//! environment while tracking what has been revealed, and reports each
//! effect as an observation delta.

pub mod capabilities;
pub mod delta;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionCall, ActionName, Dialect};
use crate::env_model::{
    canonical_edge, nodes_within_radius, region_path, Edge, Environment, NodeKind, ObjectSetEnv, SceneGraph,
    NAMED_POSITIONS,
};
use crate::masking::MaskedEnvironment;

use capabilities::{class_key, Capabilities};
pub use delta::{
    DeltaKind, DeltaOp, DeltaPayload, NodeAnnouncement, ObservationDelta, ParsedObservation, TerminalReason,
};

pub const DEFAULT_MAX_ITERATIONS: usize = 10;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revealed {
    pub nodes: BTreeSet<String>,
    /// Canonical (sorted-endpoint) form.
    pub region_edges: BTreeSet<Edge>,
    /// `(object, region)` form.
    pub object_edges: BTreeSet<Edge>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manipulation {
    pub held: Option<String>,
    pub open: BTreeSet<String>,
    pub toggled_on: BTreeSet<String>,
    pub sliced: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldState {
    #[serde(skip)]
    pub full: Arc<Environment>,
    pub revealed: Revealed,
    pub robot_location: Option<String>,
    pub visited: Vec<String>,
    /// Node descriptions surfaced so far.
    pub inspected: BTreeMap<String, String>,
    /// Current object placements (object sets only).
    pub placements: BTreeMap<String, String>,
    pub manipulation: Manipulation,
    pub terminal: Option<TerminalReason>,
    /// Planner turns consumed.
    pub step_count: usize,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmulatorError {
    #[error("malformed action {action}: {reason}")]
    Malformed { action: String, reason: String },
    #[error("the episode has already finished")]
    AlreadyTerminal,
}

impl WorldState {
    pub fn new(masked: &MaskedEnvironment, max_iterations: usize) -> Self {
        Self::from_parts(masked.reconstruct(), &masked.visible, max_iterations)
    }

    /// Starts with `visible` revealed inside the `full` environment.
    pub fn from_parts(full: Environment, visible: &Environment, max_iterations: usize) -> Self {
        let mut revealed = Revealed::default();
        let mut robot_location = None;
        let mut visited = Vec::new();
        match visible {
            Environment::SceneGraph(v) => {
                revealed.nodes.extend(v.regions.iter().chain(v.objects.iter()).map(|n| n.name.clone()));
                revealed.region_edges.extend(v.region_edges.iter().map(|(a, b)| canonical_edge(a, b)));
                revealed.object_edges.extend(v.object_edges.iter().cloned());
                robot_location = Some(v.robot_location.clone());
                visited.push(v.robot_location.clone());
            }
            Environment::ObjectSet(v) => revealed.nodes.extend(v.items().map(str::to_string)),
        }
        let placements = full.as_object_set().map(|s| s.placements.clone()).unwrap_or_default();
        Self {
            full: Arc::new(full),
            revealed,
            robot_location,
            visited,
            inspected: BTreeMap::new(),
            placements,
            manipulation: Manipulation::default(),
            terminal: None,
            step_count: 0,
            max_iterations,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal.is_some()
    }

    pub fn budget_exhausted(&self) -> bool {
        self.step_count >= self.max_iterations
    }

    /// Marks the episode as out of iterations.
    pub fn time_out(&mut self) -> ObservationDelta {
        self.terminal = Some(TerminalReason::Timeout);
        ObservationDelta::terminal(TerminalReason::Timeout)
    }

    pub fn dialect_matches(&self, d: Dialect) -> bool {
        match &*self.full {
            Environment::SceneGraph(_) => d == Dialect::Spine,
            Environment::ObjectSet(_) => d != Dialect::Spine,
        }
    }

    /// Regions reachable from the robot through revealed edges.
    pub fn reachable(&self) -> BTreeSet<String> {
        let Some(robot) = &self.robot_location else {
            return BTreeSet::new();
        };
        let mut seen = BTreeSet::from([robot.clone()]);
        let mut stack = vec![robot.clone()];
        while let Some(cur) = stack.pop() {
            for (a, b) in &self.revealed.region_edges {
                let other = if *a == cur {
                    b
                } else if *b == cur {
                    a
                } else {
                    continue;
                };
                if seen.insert(other.clone()) {
                    stack.push(other.clone());
                }
            }
        }
        seen
    }

    /// The revealed sub-environment in the full environment's order.
    pub fn revealed_environment(&self) -> Environment {
        match &*self.full {
            Environment::SceneGraph(g) => {
                let keep = |ns: &[crate::env_model::Node]| {
                    ns.iter()
                        .filter(|n| self.revealed.nodes.contains(&n.name))
                        .map(|n| crate::env_model::Node::new(n.name.clone(), n.coords))
                        .collect::<Vec<_>>()
                };
                Environment::SceneGraph(SceneGraph {
                    regions: keep(&g.regions),
                    objects: keep(&g.objects),
                    region_edges: self.revealed.region_edges.iter().cloned().collect(),
                    object_edges: self.revealed.object_edges.iter().cloned().collect(),
                    robot_location: self.robot_location.clone().unwrap_or_else(|| g.robot_location.clone()),
                })
            }
            Environment::ObjectSet(s) => {
                let keep =
                    |xs: &[String]| xs.iter().filter(|x| self.revealed.nodes.contains(*x)).cloned().collect::<Vec<_>>();
                Environment::ObjectSet(ObjectSetEnv {
                    objects: keep(&s.objects),
                    receptacles: keep(&s.receptacles),
                    placements: self
                        .placements
                        .iter()
                        .filter(|(k, _)| self.revealed.nodes.contains(*k))
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect(),
                })
            }
        }
    }

    /// Executes one action. Infeasible actions leave the state unchanged
    /// and produce a feedback delta.
    pub fn apply(&self, action: &ActionCall) -> Result<(WorldState, ObservationDelta), EmulatorError> {
        if self.is_terminal() {
            return Err(EmulatorError::AlreadyTerminal);
        }
        let malformed = |reason: String| EmulatorError::Malformed { action: action.render(), reason };
        action.check().map_err(malformed)?;
        if !self.dialect_matches(action.name.dialect()) {
            return Err(malformed(format!("{} actions cannot run in this environment", action.name.dialect())));
        }
        let full = Arc::clone(&self.full);
        let outcome = match &*full {
            Environment::SceneGraph(g) => self.spine(g, action),
            Environment::ObjectSet(s) if action.name.dialect() == Dialect::SayCan => self.saycan(s, action),
            Environment::ObjectSet(s) => self.llm_planner(s, action),
        };
        Ok(match outcome {
            Ok(Step::Ops(next, ops)) => {
                let ops = if ops.is_empty() { vec![DeltaOp::Completed { action: action.render() }] } else { ops };
                (next, ObservationDelta::from_ops(ops))
            }
            Ok(Step::Terminal(next, reason)) => (next, ObservationDelta::terminal(reason)),
            Err(reason) => (self.clone(), ObservationDelta::feedback(reason)),
        })
    }

    fn robot(&self) -> &str {
        self.robot_location.as_deref().unwrap_or("")
    }

    fn move_to(&mut self, region: &str, ops: &mut Vec<DeltaOp>) {
        if self.robot() != region {
            self.robot_location = Some(region.to_string());
            self.visited.push(region.to_string());
            ops.push(DeltaOp::UpdateRobotLocation { name: region.to_string() });
        }
    }

    fn finish(&self, reason: TerminalReason) -> Step {
        let mut next = self.clone();
        next.terminal = Some(reason.clone());
        Step::Terminal(next, reason)
    }

    // ---- scene graphs ----

    fn resolve_node(&self, g: &SceneGraph, raw: &str) -> Result<(String, NodeKind), String> {
        let name = if g.node(raw).is_some() {
            Some(raw.to_string())
        } else {
            let lower = raw.to_lowercase();
            g.node_names().find(|n| n.to_lowercase() == lower).map(str::to_string)
        };
        match name {
            Some(n) if self.revealed.nodes.contains(&n) => {
                let kind = g.kind_of(&n).expect("resolved name exists");
                Ok((n, kind))
            }
            _ => Err(format!("{raw} is not a known node")),
        }
    }

    fn reachable_region(&self, g: &SceneGraph, raw: &str) -> Result<String, String> {
        let (name, kind) = self.resolve_node(g, raw).map_err(|_| format!("unknown or unrevealed region {raw}"))?;
        if kind != NodeKind::Region {
            return Err(format!("{name} is an object, not a region"));
        }
        if !self.reachable().contains(&name) {
            return Err(format!("{name} is not reachable from {}", self.robot()));
        }
        Ok(name)
    }

    fn reveal(
        &mut self,
        g: &SceneGraph,
        nodes: BTreeSet<String>,
        redges: BTreeSet<Edge>,
        oedges: BTreeSet<Edge>,
        ops: &mut Vec<DeltaOp>,
    ) {
        let fresh: Vec<NodeAnnouncement> = nodes
            .into_iter()
            .filter(|n| !self.revealed.nodes.contains(n))
            .filter_map(|n| {
                let (kind, node) = g.node(&n)?;
                Some(NodeAnnouncement { name: n, coords: node.coords, kind, description: None })
            })
            .collect();
        self.revealed.nodes.extend(fresh.iter().map(|a| a.name.clone()));
        let known = |e: &Edge| self.revealed.nodes.contains(&e.0) && self.revealed.nodes.contains(&e.1);
        let new_o: Vec<Edge> =
            oedges.into_iter().filter(|e| known(e) && !self.revealed.object_edges.contains(e)).collect();
        let new_r: Vec<Edge> =
            redges.into_iter().filter(|e| known(e) && !self.revealed.region_edges.contains(e)).collect();
        self.revealed.object_edges.extend(new_o.iter().cloned());
        self.revealed.region_edges.extend(new_r.iter().cloned());
        if !fresh.is_empty() {
            ops.push(DeltaOp::AddNodes { nodes: fresh });
        }
        if !new_o.is_empty() || !new_r.is_empty() {
            ops.push(DeltaOp::AddConnections { edges: new_o.into_iter().chain(new_r).collect() });
        }
    }

    fn describe(&mut self, name: &str, description: Option<&str>, always: bool, ops: &mut Vec<DeltaOp>) {
        let text = match description {
            Some(d) => delta::sanitize_text(d),
            None if always => "no further details".to_string(),
            None => return,
        };
        if always || self.inspected.get(name) != Some(&text) {
            self.inspected.insert(name.to_string(), text.clone());
            ops.push(DeltaOp::UpdateNodeAttributes { name: name.to_string(), description: text });
        }
    }

    fn spine(&self, g: &SceneGraph, a: &ActionCall) -> Result<Step, String> {
        let mut next = self.clone();
        let mut ops = Vec::new();
        match a.name {
            ActionName::Goto => {
                let r = self.reachable_region(g, a.arg(0))?;
                next.robot_location = Some(r.clone());
                next.visited.push(r.clone());
                ops.push(DeltaOp::UpdateRobotLocation { name: r });
            }
            ActionName::MapRegion | ActionName::ExploreRegion => {
                let r = self.reachable_region(g, a.arg(0))?;
                let mut nodes: BTreeSet<String> = g.neighbors(&r).into_iter().map(str::to_string).collect();
                nodes.extend(g.objects_at(&r).map(str::to_string));
                let mut redges: BTreeSet<Edge> = g
                    .region_edges
                    .iter()
                    .filter(|(x, y)| *x == r || *y == r)
                    .map(|(x, y)| canonical_edge(x, y))
                    .collect();
                let mut oedges: BTreeSet<Edge> = g.object_edges.iter().filter(|(_, x)| *x == r).cloned().collect();
                if let Some(radius) = a.radius() {
                    let near = nodes_within_radius(g, &r, radius).map_err(|e| e.to_string())?;
                    nodes.extend(near.iter().cloned());
                    let allowed = |n: &String| *n == r || nodes.contains(n) || self.revealed.nodes.contains(n);
                    let touches = |x: &String, y: &String| near.contains(x) || near.contains(y);
                    redges.extend(
                        g.region_edges
                            .iter()
                            .filter(|(x, y)| touches(x, y) && allowed(x) && allowed(y))
                            .map(|(x, y)| canonical_edge(x, y)),
                    );
                    oedges.extend(
                        g.object_edges.iter().filter(|(x, y)| touches(x, y) && allowed(x) && allowed(y)).cloned(),
                    );
                }
                next.reveal(g, nodes, redges, oedges, &mut ops);
                next.move_to(&r, &mut ops);
                let desc = g.region(&r).and_then(|n| n.description.as_deref());
                next.describe(&r, desc, false, &mut ops);
            }
            ActionName::Inspect => {
                let (name, kind) = self.resolve_node(g, a.arg(0))?;
                let stand = match kind {
                    NodeKind::Region => self.reachable_region(g, &name)?,
                    NodeKind::Object => {
                        let reach = self.reachable();
                        let edges: Vec<&Edge> = self.revealed.region_edges.iter().collect();
                        self.revealed
                            .object_edges
                            .iter()
                            .filter(|(o, r)| *o == name && reach.contains(r))
                            .filter_map(|(_, r)| {
                                let hops = region_path(edges.iter().copied(), self.robot(), r)?.len();
                                Some((hops, r.clone()))
                            })
                            .min()
                            .map(|(_, r)| r)
                            .ok_or_else(|| format!("{name} is not visible from any reachable region"))?
                    }
                };
                next.move_to(&stand, &mut ops);
                let desc = g.node(&name).and_then(|(_, n)| n.description.as_deref());
                next.describe(&name, desc, true, &mut ops);
            }
            ActionName::Answer => return Ok(self.finish(TerminalReason::Answered { message: a.arg(0).to_string() })),
            _ => unreachable!("dialect checked by caller"),
        }
        Ok(Step::Ops(next, ops))
    }

    // ---- tabletop ----

    fn saycan(&self, s: &ObjectSetEnv, a: &ActionCall) -> Result<Step, String> {
        if a.name == ActionName::Done {
            return Ok(self.finish(TerminalReason::Done));
        }
        let x = a.arg(0);
        let y = a.arg(1);
        if !self.revealed.nodes.contains(x) || !s.objects.iter().any(|o| o == x) {
            return Err(format!("{x} is not a movable object on the table"));
        }
        let location_ok = (self.revealed.nodes.contains(y) && s.contains(y)) || NAMED_POSITIONS.contains(&y);
        if !location_ok {
            return Err(format!("{y} is not a valid location"));
        }
        if x == y {
            return Err(format!("cannot place {x} on itself"));
        }
        if let Some((top, _)) = self.placements.iter().find(|(_, under)| *under == x) {
            return Err(format!("{x} cannot be picked up while {top} is on top of it"));
        }
        let mut at = y;
        let mut hops = 0;
        while let Some(under) = self.placements.get(at) {
            if under == x || hops > self.placements.len() {
                return Err(format!("placing {x} on {y} would stack {x} on itself"));
            }
            at = under;
            hops += 1;
        }
        let mut next = self.clone();
        next.placements.insert(x.to_string(), y.to_string());
        Ok(Step::Ops(next, vec![DeltaOp::UpdatePlacement { object: x.to_string(), location: y.to_string() }]))
    }

    // ---- household sub-goals ----

    fn resolve_item(&self, raw: &str) -> Option<String> {
        let norm = |s: &str| -> String {
            s.chars().filter(|c| !c.is_whitespace() && *c != '_').flat_map(char::to_lowercase).collect()
        };
        let want = norm(raw);
        let class = class_key(raw);
        self.revealed
            .nodes
            .iter()
            .find(|n| norm(n) == want)
            .or_else(|| self.revealed.nodes.iter().find(|n| class_key(n) == class))
            .cloned()
    }

    fn closed(&self, container: &str) -> bool {
        Capabilities::get().openable(container) && !self.manipulation.open.contains(container)
    }

    /// Reveals hidden items resting in or on `loc`, transitively, stopping
    /// at closed containers.
    fn reveal_contents(&mut self, s: &ObjectSetEnv, loc: &str) -> Vec<String> {
        let mut fresh = Vec::new();
        if self.closed(loc) {
            return fresh;
        }
        let mut frontier = vec![loc.to_string()];
        while let Some(at) = frontier.pop() {
            let found: Vec<String> = s
                .items()
                .filter(|o| {
                    !self.revealed.nodes.contains(*o)
                        && self.placements.get(*o).map(String::as_str) == Some(at.as_str())
                })
                .map(str::to_string)
                .collect();
            for o in found {
                self.revealed.nodes.insert(o.clone());
                if !self.closed(&o) {
                    frontier.push(o.clone());
                }
                fresh.push(o);
            }
        }
        fresh.sort();
        fresh
    }

    fn llm_planner(&self, s: &ObjectSetEnv, a: &ActionCall) -> Result<Step, String> {
        let caps = Capabilities::get();
        let mut next = self.clone();
        let visible = |raw: &str| self.resolve_item(raw).ok_or_else(|| format!("{raw} is not visible"));
        let mut revealed = Vec::new();
        match a.name {
            ActionName::Navigation => {
                let x = visible(a.arg(0))?;
                next.robot_location = Some(x.clone());
                next.visited.push(x.clone());
                revealed = next.reveal_contents(s, &x);
            }
            ActionName::PickupObject => {
                let x = visible(a.arg(0))?;
                if !caps.pickupable(&x) {
                    return Err(format!("{x} cannot be picked up"));
                }
                if let Some(h) = &self.manipulation.held {
                    return Err(format!("already holding {h}"));
                }
                if let Some(c) = self.placements.get(&x) {
                    if self.closed(c) {
                        return Err(format!("{x} is inside {c}, which is closed"));
                    }
                }
                next.manipulation.held = Some(x.clone());
                next.placements.remove(&x);
            }
            ActionName::PutObject => {
                let held = self.manipulation.held.clone().ok_or("not holding anything")?;
                let target_arg = if a.args.len() == 2 {
                    let x = visible(a.arg(0))?;
                    if x != held {
                        return Err(format!("not holding {x}"));
                    }
                    a.arg(1)
                } else {
                    a.arg(0)
                };
                let y = visible(target_arg)?;
                if !caps.receptacle(&y) {
                    return Err(format!("{y} is not a receptacle"));
                }
                if self.closed(&y) {
                    return Err(format!("{y} is closed"));
                }
                next.placements.insert(held, y);
                next.manipulation.held = None;
            }
            ActionName::OpenObject | ActionName::CloseObject => {
                let x = visible(a.arg(0))?;
                if !caps.openable(&x) {
                    return Err(format!("{x} cannot be opened or closed"));
                }
                let is_open = self.manipulation.open.contains(&x);
                if a.name == ActionName::OpenObject {
                    if is_open {
                        return Err(format!("{x} is already open"));
                    }
                    next.manipulation.open.insert(x.clone());
                    revealed = next.reveal_contents(s, &x);
                } else {
                    if !is_open {
                        return Err(format!("{x} is already closed"));
                    }
                    next.manipulation.open.remove(&x);
                }
            }
            ActionName::ToggleObjectOn | ActionName::ToggleObjectOff => {
                let x = visible(a.arg(0))?;
                if !caps.toggleable(&x) {
                    return Err(format!("{x} cannot be toggled"));
                }
                let on = self.manipulation.toggled_on.contains(&x);
                if a.name == ActionName::ToggleObjectOn {
                    if on {
                        return Err(format!("{x} is already on"));
                    }
                    next.manipulation.toggled_on.insert(x);
                } else {
                    if !on {
                        return Err(format!("{x} is already off"));
                    }
                    next.manipulation.toggled_on.remove(&x);
                }
            }
            ActionName::SliceObject => {
                let x = visible(a.arg(0))?;
                if !caps.sliceable(&x) {
                    return Err(format!("{x} cannot be sliced"));
                }
                match &self.manipulation.held {
                    Some(h) if caps.knife(h) => {}
                    _ => return Err("slicing requires holding a knife".to_string()),
                }
                if !next.manipulation.sliced.insert(x.clone()) {
                    return Err(format!("{x} is already sliced"));
                }
            }
            _ => unreachable!("dialect checked by caller"),
        }
        let mut ops = vec![DeltaOp::Completed { action: a.render() }];
        if !revealed.is_empty() {
            ops.push(DeltaOp::AddObjects { names: revealed });
        }
        Ok(Step::Ops(next, ops))
    }
}

enum Step {
    Ops(WorldState, Vec<DeltaOp>),
    Terminal(WorldState, TerminalReason),
}

pub fn apply_action(state: &WorldState, action: &ActionCall) -> Result<(WorldState, ObservationDelta), EmulatorError> {
    state.apply(action)
}
