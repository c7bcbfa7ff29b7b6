//! Privileged planner used to produce reference trajectories and to test
//! the pipeline end to end.
//!
//! The oracle sees only the conversation plus the ground-truth hint. It
//! rebuilds what the planner has been told from the observation turns and
//! uses the full environment only to choose where to look next.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::action::{ActionCall, ActionName, Dialect};
use crate::chat::{ChatMessages, Role};
use crate::emulator::delta::{parse_observation, DeltaOp};
use crate::emulator::WorldState;
use crate::env_model::{
    canonical_edge, hop_distances, parse_environment, region_path, Edge, Environment, NodeKind, SceneGraph,
};
use crate::goals::{GoalSpec, PlacementPredicate};
use crate::llm_client::{ChatBackend, Completion, LlmError, OracleHint, RequestContext};
use crate::plan_io::{render_response, task_from_system_prompt, PlannerResponse};

pub struct OracleBackend {
    dialect: Dialect,
}

impl OracleBackend {
    pub fn new(dialect: Dialect) -> Self {
        Self { dialect }
    }
}

impl ChatBackend for OracleBackend {
    fn complete(&self, messages: &ChatMessages, ctx: &RequestContext) -> Result<Completion, LlmError> {
        messages.validate().map_err(LlmError::InvalidMessages)?;
        let hint = ctx.hint.as_ref().ok_or(LlmError::MissingHint("oracle"))?;
        let response = match self.dialect {
            Dialect::Spine => spine_response(messages, hint),
            Dialect::SayCan => saycan_response(hint),
            Dialect::LlmPlanner => llm_planner_response(messages, hint),
        };
        Ok(Completion::instant(render_response(&response)))
    }

    fn describe(&self) -> String {
        format!("oracle({})", self.dialect)
    }
}

/// What the planner has been shown so far.
#[derive(Debug, Clone, Default)]
pub struct Belief {
    pub kinds: BTreeMap<String, NodeKind>,
    pub coords: HashMap<String, [f64; 2]>,
    pub region_edges: BTreeSet<Edge>,
    pub object_edges: BTreeSet<Edge>,
    pub robot: String,
    pub visited: BTreeSet<String>,
    pub described: BTreeMap<String, String>,
}

impl Belief {
    pub fn from_messages(messages: &ChatMessages) -> Option<Belief> {
        let mut users = messages.0.iter().filter(|m| m.role == Role::User);
        let first = users.next()?;
        let Environment::SceneGraph(g) = parse_environment(&first.content).ok()? else {
            return None;
        };
        let mut b = Belief { robot: g.robot_location.clone(), ..Belief::default() };
        b.visited.insert(g.robot_location.clone());
        for (kind, ns) in [(NodeKind::Region, &g.regions), (NodeKind::Object, &g.objects)] {
            for n in ns {
                b.kinds.insert(n.name.clone(), kind);
                b.coords.insert(n.name.clone(), n.coords);
            }
        }
        b.region_edges.extend(g.region_edges.iter().map(|(x, y)| canonical_edge(x, y)));
        b.object_edges.extend(g.object_edges.iter().cloned());
        for m in users {
            let Ok(obs) = parse_observation(&m.content) else {
                continue;
            };
            for op in obs.ops {
                b.apply(op);
            }
        }
        Some(b)
    }

    fn apply(&mut self, op: DeltaOp) {
        match op {
            DeltaOp::AddNodes { nodes } => {
                for n in nodes {
                    self.coords.insert(n.name.clone(), n.coords);
                    self.kinds.insert(n.name, n.kind);
                }
            }
            DeltaOp::AddConnections { edges } => {
                for (x, y) in edges {
                    match (self.kinds.get(&x), self.kinds.get(&y)) {
                        (Some(NodeKind::Object), _) => {
                            self.object_edges.insert((x, y));
                        }
                        (_, Some(NodeKind::Object)) => {
                            self.object_edges.insert((y, x));
                        }
                        _ => {
                            self.region_edges.insert(canonical_edge(&x, &y));
                        }
                    }
                }
            }
            DeltaOp::UpdateRobotLocation { name } => {
                self.visited.insert(name.clone());
                self.robot = name;
            }
            DeltaOp::UpdateNodeAttributes { name, description } => {
                self.described.insert(name, description);
            }
            _ => {}
        }
    }

    pub fn knows(&self, name: &str) -> bool {
        self.kinds.contains_key(name)
    }

    pub fn reachable(&self) -> BTreeSet<String> {
        let mut seen = BTreeSet::from([self.robot.clone()]);
        let mut stack = vec![self.robot.clone()];
        while let Some(cur) = stack.pop() {
            for (a, b) in &self.region_edges {
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

    /// A reachable region the object is known to be visible from, nearest first.
    fn reachable_anchor(&self, object: &str) -> Option<String> {
        let reach = self.reachable();
        let edges: Vec<&Edge> = self.region_edges.iter().collect();
        self.object_edges
            .iter()
            .filter(|(o, r)| o == object && reach.contains(r))
            .filter_map(|(_, r)| Some((region_path(edges.iter().copied(), &self.robot, r)?.len(), r.clone())))
            .min()
            .map(|(_, r)| r)
    }
}

fn atoms(goal: &GoalSpec) -> Vec<&GoalSpec> {
    match goal {
        GoalSpec::All { goals } => goals.iter().flat_map(atoms).collect(),
        g => vec![g],
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn coords_of(g: &SceneGraph, name: &str) -> [f64; 2] {
    g.node(name).map(|(_, n)| n.coords).unwrap_or([0.0, 0.0])
}

enum Need {
    Done,
    Act(Vec<ActionCall>),
    Find(String),
}

fn atom_need(atom: &GoalSpec, g: &SceneGraph, b: &Belief) -> Need {
    let reach = b.reachable();
    let call = |n: ActionName, args: &[&str]| ActionCall::new(n, args.iter().copied());
    match atom {
        GoalSpec::VisitRegion { region } => {
            if b.visited.contains(region) {
                Need::Done
            } else if reach.contains(region) {
                Need::Act(vec![call(ActionName::Goto, &[region])])
            } else {
                Need::Find(region.clone())
            }
        }
        GoalSpec::NearObject { object } => {
            if g.anchors(object).any(|r| b.visited.contains(r)) {
                Need::Done
            } else if let Some(a) = b.reachable_anchor(object) {
                Need::Act(vec![call(ActionName::Goto, &[&a])])
            } else {
                Need::Find(object.clone())
            }
        }
        GoalSpec::MapRegion { region } => {
            let mapped = b.knows(region)
                && g.neighbors(region).iter().all(|n| b.knows(n))
                && g.objects_at(region).all(|o| b.knows(o));
            if mapped {
                Need::Done
            } else if reach.contains(region) {
                Need::Act(vec![call(ActionName::MapRegion, &[region])])
            } else {
                Need::Find(region.clone())
            }
        }
        GoalSpec::RevealObject { object } => {
            if b.knows(object) {
                Need::Done
            } else {
                Need::Find(object.clone())
            }
        }
        GoalSpec::InspectNode { node } => {
            let ready = match b.kinds.get(node) {
                Some(NodeKind::Region) => reach.contains(node),
                Some(NodeKind::Object) => b.reachable_anchor(node).is_some(),
                None => false,
            };
            if b.described.contains_key(node) {
                Need::Done
            } else if ready {
                Need::Act(vec![call(ActionName::Inspect, &[node, "describe it"])])
            } else {
                Need::Find(node.clone())
            }
        }
        GoalSpec::AnswerMentions { tokens } => match tokens.iter().find(|t| g.node(t).is_some() && !b.knows(t)) {
            Some(t) => Need::Find(t.clone()),
            None => Need::Done,
        },
        GoalSpec::Placement { .. } | GoalSpec::SubgoalSequence { .. } | GoalSpec::All { .. } => Need::Done,
    }
}

/// Picks the reachable region to map or explore next so that `target`
/// comes into view soonest.
fn explore_toward(target: &str, g: &SceneGraph, b: &Belief, turns_left: usize) -> Option<ActionCall> {
    let goal_regions: Vec<&str> = match g.kind_of(target)? {
        NodeKind::Region => vec![target],
        NodeKind::Object => g.anchors(target).collect(),
    };
    let hops = hop_distances(&g.region_edges, &goal_regions);
    let reach = b.reachable();
    let unexplored = |r: &str| {
        g.neighbors(r).iter().any(|n| !b.knows(n))
            || g.objects_at(r).any(|o| !b.knows(o))
            || g.region_edges.iter().any(|(x, y)| (x == r || y == r) && !b.region_edges.contains(&canonical_edge(x, y)))
            || g.object_edges.iter().any(|e| e.1 == r && !b.object_edges.contains(e))
    };
    let target_xy = coords_of(g, target);
    let frontier = reach
        .iter()
        .filter(|r| g.region(r).is_some() && unexplored(r))
        .min_by(|x, y| {
            let hx = hops.get(*x).copied().unwrap_or(usize::MAX);
            let hy = hops.get(*y).copied().unwrap_or(usize::MAX);
            hx.cmp(&hy)
                .then_with(|| distance(coords_of(g, x), target_xy).total_cmp(&distance(coords_of(g, y), target_xy)))
                .then_with(|| x.cmp(y))
        })?
        .clone();
    let hop = hops.get(&frontier).copied().unwrap_or(usize::MAX);
    if hop != usize::MAX && hop.saturating_add(3) >= turns_left {
        // Not enough turns to map hop by hop: sweep the whole route at once.
        let path =
            goal_regions.iter().filter_map(|t| region_path(&g.region_edges, &frontier, t)).min_by_key(Vec::len)?;
        let here = coords_of(g, &frontier);
        let reach_radius = path
            .iter()
            .map(|n| distance(here, coords_of(g, n)))
            .chain(std::iter::once(distance(here, target_xy)))
            .fold(0.0_f64, f64::max);
        let radius = (reach_radius.ceil() + 1.0) as u64;
        return Some(ActionCall::new(ActionName::ExploreRegion, [frontier, radius.to_string()]));
    }
    Some(ActionCall::new(ActionName::MapRegion, [frontier]))
}

fn answer_text(goal: &GoalSpec, g: &SceneGraph, b: &Belief) -> String {
    let mut parts: Vec<String> = Vec::new();
    for atom in atoms(goal) {
        let s = match atom {
            GoalSpec::VisitRegion { region } => format!("I am at {region}."),
            GoalSpec::NearObject { object } => {
                let at = g.anchors(object).find(|r| b.visited.contains(*r)).unwrap_or(&b.robot);
                format!("I am next to {object} at {at}.")
            }
            GoalSpec::MapRegion { region } => {
                let n = g.neighbors(region).join(", ");
                format!("I mapped {region}; it connects to {n}.")
            }
            GoalSpec::RevealObject { object } => {
                let anchors: Vec<&str> = g.anchors(object).collect();
                format!("{object} is visible from {}.", anchors.join(", "))
            }
            GoalSpec::InspectNode { node } => {
                let d = b.described.get(node).map(String::as_str).unwrap_or("no further details");
                format!("{node}: {d}")
            }
            GoalSpec::AnswerMentions { tokens } => format!("Yes: {}.", tokens.join(", ")),
            _ => continue,
        };
        if !parts.contains(&s) {
            parts.push(s);
        }
    }
    if parts.is_empty() {
        "Done.".to_string()
    } else {
        parts.join(" ")
    }
}

fn spine_response(messages: &ChatMessages, hint: &OracleHint) -> PlannerResponse {
    let task = task_from_system_prompt(messages.system_text()).unwrap_or("").to_string();
    let targets = hint.goal.targets();
    let mut r = PlannerResponse::new(Dialect::Spine, Vec::new());
    r.primary_goal = Some(task.clone());
    r.relevant_graph = Some(targets.join(", "));
    let (Some(g), Some(b)) = (hint.full.as_scene_graph(), Belief::from_messages(messages)) else {
        r.reasoning = Some("The observation is not a scene graph.".into());
        r.plan = vec![ActionCall::new(ActionName::Answer, ["I cannot interpret the scene."])];
        return r;
    };
    let turns_left = hint.max_iterations.saturating_sub(messages.assistant_turns());
    let atom_list = atoms(&hint.goal);
    let mut pending = atom_list.iter().map(|a| (a, atom_need(a, g, &b))).filter(|(_, n)| !matches!(n, Need::Done));
    let answer = |b: &Belief| ActionCall::new(ActionName::Answer, [answer_text(&hint.goal, g, b)]);
    match pending.next() {
        None => {
            r.reasoning = Some("Everything the task asks for is already in the graph.".into());
            r.plan = vec![answer(&b)];
        }
        Some((atom, Need::Act(mut calls))) => {
            let moving = calls.iter().all(|c| c.name == ActionName::Goto);
            let last = pending.next().is_none();
            if moving && last {
                // A plain move finishes the task; answer in the same turn.
                let mut after = b.clone();
                for c in &calls {
                    after.visited.insert(c.args[0].clone());
                    after.robot = c.args[0].clone();
                }
                calls.push(answer(&after));
            }
            r.reasoning =
                Some(format!("The graph already supports the next step toward {}.", atom.targets().join(", ")));
            r.plan = calls;
        }
        Some((_, Need::Find(t))) => match explore_toward(&t, g, &b, turns_left) {
            Some(step) => {
                r.reasoning = Some(format!("{t} is not reachable yet; {} brings it closer.", step.args[0]));
                r.plan = vec![step];
            }
            None => {
                r.reasoning = Some(format!("There is nothing left to explore that leads to {t}."));
                r.plan = vec![ActionCall::new(ActionName::Answer, [format!("I could not find {t}.")])];
            }
        },
        Some((_, Need::Done)) => unreachable!("filtered"),
    }
    r
}

/// Orders pick-and-place moves so nothing is picked up from under another
/// object, then ends the program.
fn saycan_response(hint: &OracleHint) -> PlannerResponse {
    let mut plan = Vec::new();
    if let (Some(s), GoalSpec::Placement { predicate }) = (hint.full.as_object_set(), &hint.goal) {
        let bowl_for = |block: &str| block.strip_suffix("block").map(|c| format!("{}bowl", c));
        let pairs: Vec<(String, String)> = match predicate {
            PlacementPredicate::On { pairs } => pairs.clone(),
            PlacementPredicate::EachBlockInMatchingBowl => s
                .objects
                .iter()
                .filter_map(|o| Some((o.clone(), bowl_for(o).filter(|b| s.contains(b))?)))
                .filter(|(o, b)| s.placements.get(o) != Some(b))
                .collect(),
            PlacementPredicate::NoBlockInMatchingBowl => s
                .objects
                .iter()
                .filter(|o| bowl_for(o).is_some_and(|b| s.placements.get(*o) == Some(&b)))
                .map(|o| (o.clone(), "middle".to_string()))
                .collect(),
        };
        let mut state = WorldState::from_parts((*hint.full).clone(), &hint.full, usize::MAX);
        let mut emit = |state: &mut WorldState, x: &str, y: &str| {
            let call = ActionCall::new(ActionName::PickAndPlace, [x, y]);
            if let Ok((next, d)) = state.apply(&call) {
                if d.kind != crate::emulator::DeltaKind::Feedback {
                    *state = next;
                    plan.push(call);
                }
            }
        };
        // Clear whatever is stacked on the objects that must move.
        for (x, _) in &pairs {
            while let Some(top) = topmost_above(&state, x) {
                emit(&mut state, &top, "table");
            }
        }
        // An object that is someone's destination must be placed before
        // anything is put on it.
        let mut todo = pairs;
        while !todo.is_empty() {
            let pos = (0..todo.len())
                .find(|&j| !todo.iter().enumerate().any(|(i, (x, _))| i != j && *x == todo[j].1))
                .unwrap_or(0);
            let (x, y) = todo.remove(pos);
            if state.placements.get(&x) == Some(&y) {
                continue;
            }
            while let Some(top) = topmost_above(&state, &x) {
                emit(&mut state, &top, "table");
            }
            emit(&mut state, &x, &y);
        }
    }
    plan.push(ActionCall::new(ActionName::Done, Vec::<String>::new()));
    PlannerResponse::new(Dialect::SayCan, plan)
}

fn topmost_above(state: &WorldState, x: &str) -> Option<String> {
    let mut top: Option<String> = None;
    let mut cur = x.to_string();
    for _ in 0..=state.placements.len() {
        match state.placements.iter().find(|(_, under)| **under == cur) {
            Some((o, _)) => {
                cur = o.clone();
                top = Some(o.clone());
            }
            None => break,
        }
    }
    top
}

/// Emits the reference sub-goals that have not been reported complete yet.
fn llm_planner_response(messages: &ChatMessages, hint: &OracleHint) -> PlannerResponse {
    let steps = match &hint.goal {
        GoalSpec::SubgoalSequence { steps } => steps.clone(),
        _ => Vec::new(),
    };
    let completed = messages
        .0
        .iter()
        .filter(|m| m.role == Role::User)
        .skip(1)
        .filter_map(|m| parse_observation(&m.content).ok())
        .flat_map(|o| o.ops)
        .filter(|op| matches!(op, DeltaOp::Completed { .. }))
        .count();
    let mut rest: Vec<ActionCall> = steps.into_iter().skip(completed).collect();
    // Stop before the first step that names something not seen yet; the
    // steps before it are what reveals it.
    let seen = household_seen(messages);
    if let Some(cut) = rest.iter().position(|a| a.args.iter().any(|x| !seen.contains(x.as_str()))) {
        if cut > 0 {
            rest.truncate(cut);
        }
    }
    if rest.is_empty() {
        rest = vec![ActionCall::new(
            ActionName::Navigation,
            [hint
                .full
                .as_object_set()
                .and_then(|s| s.receptacles.first().cloned())
                .unwrap_or_else(|| "CounterTop".to_string())],
        )];
    }
    PlannerResponse::new(Dialect::LlmPlanner, rest)
}

/// Items listed in the first observation plus every later sighting.
fn household_seen(messages: &ChatMessages) -> BTreeSet<String> {
    let mut users = messages.0.iter().filter(|m| m.role == Role::User);
    let mut seen: BTreeSet<String> = users
        .next()
        .map(|m| m.content.trim())
        .and_then(|c| c.strip_prefix("Visible objects:"))
        .map(|list| list.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect())
        .unwrap_or_default();
    for op in users.filter_map(|m| parse_observation(&m.content).ok()).flat_map(|o| o.ops) {
        if let DeltaOp::AddObjects { names } = op {
            seen.extend(names);
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chat::ChatMessage;
    use crate::masking::{initial_observation, mask_environment};
    use crate::plan_io::{initial_messages, parse_response};
    use std::sync::Arc;

    #[test]
    fn belief_tracks_deltas() {
        let env = parse_environment(include_str!("../tests/fixtures/example_graph.json")).unwrap();
        let m = mask_environment(&env, 0.5, 4);
        let obs = initial_observation(&m, Dialect::Spine);
        let mut msgs = initial_messages(Dialect::Spine, "Go to road_6.", &obs);
        msgs.push(ChatMessage::assistant("[map_region(ground_1)]"));
        msgs.push(ChatMessage::user(
            "add_nodes({zz_1: {coords: [1.0, 2.0], type: object, name: zz_1}}),\nadd_connections([zz_1, ground_1])",
        ));
        let b = Belief::from_messages(&msgs).unwrap();
        assert_eq!(b.kinds.get("zz_1"), Some(&NodeKind::Object));
        assert!(b.object_edges.contains(&("zz_1".to_string(), "ground_1".to_string())));
        assert_eq!(b.robot, "ground_1");
    }

    #[test]
    fn visit_goal_in_one_turn_when_reachable() {
        let env = parse_environment(include_str!("../tests/fixtures/example_graph.json")).unwrap();
        let m = mask_environment(&env, 0.0, 0);
        let msgs = initial_messages(Dialect::Spine, "Go to road_6.", &initial_observation(&m, Dialect::Spine));
        let hint = OracleHint {
            full: Arc::new(env),
            goal: GoalSpec::VisitRegion { region: "road_6".into() },
            max_iterations: 10,
        };
        let ctx = RequestContext { episode_id: "e".into(), hint: Some(hint) };
        let c = OracleBackend::new(Dialect::Spine).complete(&msgs, &ctx).unwrap();
        let r = parse_response(Dialect::Spine, &c.text).unwrap();
        assert_eq!(r.plan.len(), 2);
        assert_eq!(r.plan[0], ActionCall::new(ActionName::Goto, ["road_6"]));
        assert_eq!(r.plan[1].name, ActionName::Answer);
        assert_eq!(r.primary_goal.as_deref(), Some("Go to road_6."));
    }

    #[test]
    fn needs_a_hint() {
        let msgs = ChatMessages::new("s").with(ChatMessage::user("{}"));
        let e = OracleBackend::new(Dialect::Spine).complete(&msgs, &RequestContext::default());
        assert_eq!(e, Err(LlmError::MissingHint("oracle")));
    }
}
