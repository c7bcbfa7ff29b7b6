//! Replays a recorded planner trace through the emulator and compares the
//! observations it produces with the recorded ones.
//!
//! Recorded observations are normalized before comparison: ops are split
//! into one op per node or edge and compared as sets, undirected edges are
//! ordered, whitespace in text is collapsed, coordinates are rounded to
//! millimeters, and descriptions inside `add_nodes` are ignored (the
//! emulator announces descriptions only through `update_node_attributes`).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::action::{ActionCall, Dialect};
use crate::emulator::delta::{parse_observation, FEEDBACK_PREFIX};
use crate::emulator::{DeltaKind, DeltaOp, WorldState};
use crate::env_model::canonical_edge;
use crate::plan_io::{parse_response, ParseError};
use crate::util::squash_ws;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceTurn {
    pub plan: String,
    /// Absent on the final turn.
    #[serde(default)]
    pub observation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub task: String,
    pub turns: Vec<TraceTurn>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnCheck {
    pub index: usize,
    pub executed: Vec<ActionCall>,
    pub expected: BTreeSet<String>,
    pub actual: BTreeSet<String>,
}

impl TurnCheck {
    pub fn matches(&self) -> bool {
        self.expected == self.actual
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("turn {turn}: plan does not parse: {source}")]
    Plan { turn: usize, source: ParseError },
    #[error("turn {turn}: observation does not parse: {source}")]
    Observation { turn: usize, source: ParseError },
    #[error("turn {turn}: {message}")]
    Emulator { turn: usize, message: String },
}

pub fn normalize_ops(ops: &[DeltaOp]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for op in ops {
        match op {
            DeltaOp::AddNodes { nodes } => {
                for n in nodes {
                    out.insert(format!("add_node {} {} [{:.3}, {:.3}]", n.name, n.kind, n.coords[0], n.coords[1]));
                }
            }
            DeltaOp::AddConnections { edges } => {
                for (a, b) in edges {
                    let (a, b) = canonical_edge(a, b);
                    out.insert(format!("add_connection {a} {b}"));
                }
            }
            DeltaOp::RemoveConnections { edges } => {
                for (a, b) in edges {
                    let (a, b) = canonical_edge(a, b);
                    out.insert(format!("remove_connection {a} {b}"));
                }
            }
            DeltaOp::RemoveNode { name } => {
                out.insert(format!("remove_node {name}"));
            }
            DeltaOp::UpdateRobotLocation { name } => {
                out.insert(format!("robot {name}"));
            }
            DeltaOp::UpdateNodeAttributes { name, description } => {
                out.insert(format!("describe {name} {}", squash_ws(description)));
            }
            DeltaOp::AddObjects { names } => {
                for n in names {
                    out.insert(format!("add_object {n}"));
                }
            }
            DeltaOp::UpdatePlacement { object, location } => {
                out.insert(format!("place {object} {location}"));
            }
            DeltaOp::Completed { action } => {
                out.insert(format!("completed {}", squash_ws(action)));
            }
        }
    }
    out
}

/// Executes the first action of each recorded plan from `state` (the
/// planner replans after every observation) and pairs what the emulator said with what
/// was recorded.
pub fn replay_trace(
    mut state: WorldState,
    dialect: Dialect,
    trace: &Trace,
) -> Result<(Vec<TurnCheck>, WorldState), TraceError> {
    let mut checks = Vec::new();
    for (turn, t) in trace.turns.iter().enumerate() {
        let resp = parse_response(dialect, &t.plan).map_err(|source| TraceError::Plan { turn, source })?;
        let mut executed = Vec::new();
        let mut actual = BTreeSet::new();
        if let Some(a) = resp.plan.first() {
            let (next, delta) = state.apply(a).map_err(|e| TraceError::Emulator { turn, message: e.to_string() })?;
            state = next;
            executed.push(a.clone());
            match delta.kind {
                DeltaKind::Terminal => {}
                DeltaKind::Feedback => {
                    actual.insert(squash_ws(delta.rendered.trim_start_matches(FEEDBACK_PREFIX)));
                }
                _ => actual = normalize_ops(delta.ops()),
            }
        }
        let expected = match &t.observation {
            None => BTreeSet::new(),
            Some(text) => {
                let parsed = parse_observation(text).map_err(|source| TraceError::Observation { turn, source })?;
                let mut set = normalize_ops(&parsed.ops);
                if let Some(f) = parsed.feedback {
                    set.insert(f);
                }
                set
            }
        };
        checks.push(TurnCheck { index: turn, executed, expected, actual });
    }
    Ok((checks, state))
}
