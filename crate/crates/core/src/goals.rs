//! Machine-checkable task goals.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::action::{ActionCall, ActionName};
use crate::emulator::capabilities::class_key;
use crate::emulator::{TerminalReason, WorldState};
use crate::env_model::Environment;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PlacementPredicate {
    /// Each `(object, location)` pair holds directly.
    On { pairs: Vec<(String, String)> },
    /// Every `<color> block` sits in the `<color> bowl`, when one exists.
    EachBlockInMatchingBowl,
    /// No block sits in the bowl of its own color.
    NoBlockInMatchingBowl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GoalSpec {
    /// The robot stood in `region` at some point.
    VisitRegion {
        region: String,
    },
    /// The robot stood in a region `object` is visible from.
    NearObject {
        object: String,
    },
    /// Every neighbor of `region` and every object visible from it was revealed.
    MapRegion {
        region: String,
    },
    RevealObject {
        object: String,
    },
    /// The node's description was surfaced.
    InspectNode {
        node: String,
    },
    /// The episode ended with an answer mentioning every token.
    AnswerMentions {
        tokens: Vec<String>,
    },
    Placement {
        predicate: PlacementPredicate,
    },
    /// The steps were completed in this order (other steps may interleave).
    SubgoalSequence {
        steps: Vec<ActionCall>,
    },
    All {
        goals: Vec<GoalSpec>,
    },
}

impl GoalSpec {
    /// Node names the goal is about, for prompting and oracle targeting.
    pub fn targets(&self) -> Vec<String> {
        match self {
            GoalSpec::VisitRegion { region } | GoalSpec::MapRegion { region } => vec![region.clone()],
            GoalSpec::NearObject { object } | GoalSpec::RevealObject { object } => vec![object.clone()],
            GoalSpec::InspectNode { node } => vec![node.clone()],
            GoalSpec::AnswerMentions { tokens } => tokens.clone(),
            GoalSpec::Placement { predicate: PlacementPredicate::On { pairs } } => {
                pairs.iter().flat_map(|(a, b)| [a.clone(), b.clone()]).collect()
            }
            GoalSpec::Placement { .. } => Vec::new(),
            GoalSpec::SubgoalSequence { steps } => steps.iter().flat_map(|s| s.args.clone()).collect(),
            GoalSpec::All { goals } => {
                let mut out: Vec<String> = Vec::new();
                for g in goals {
                    for t in g.targets() {
                        if !out.contains(&t) {
                            out.push(t);
                        }
                    }
                }
                out
            }
        }
    }

    /// Whether the goal is met by a finished episode. Timeouts never succeed.
    pub fn is_satisfied(&self, state: &WorldState, executed: &[ActionCall]) -> bool {
        match &state.terminal {
            None | Some(TerminalReason::Timeout) => false,
            Some(_) => self.holds(state, executed),
        }
    }

    /// The goal's state predicate, ignoring how the episode ended.
    pub fn holds(&self, state: &WorldState, executed: &[ActionCall]) -> bool {
        match self {
            GoalSpec::VisitRegion { region } => state.visited.iter().any(|r| r == region),
            GoalSpec::NearObject { object } => match state.full.as_scene_graph() {
                Some(g) => g.anchors(object).any(|r| state.visited.iter().any(|v| v == r)),
                None => false,
            },
            GoalSpec::MapRegion { region } => match state.full.as_scene_graph() {
                Some(g) => {
                    state.revealed.nodes.contains(region)
                        && g.neighbors(region).iter().all(|n| state.revealed.nodes.contains(*n))
                        && g.objects_at(region).all(|o| state.revealed.nodes.contains(o))
                }
                None => false,
            },
            GoalSpec::RevealObject { object } => state.revealed.nodes.contains(object),
            GoalSpec::InspectNode { node } => state.inspected.contains_key(node),
            GoalSpec::AnswerMentions { tokens } => match &state.terminal {
                Some(TerminalReason::Answered { message }) => {
                    let m = message.to_lowercase();
                    tokens.iter().all(|t| m.contains(&t.to_lowercase()))
                }
                _ => false,
            },
            GoalSpec::Placement { predicate } => placement_holds(predicate, state),
            GoalSpec::SubgoalSequence { steps } => {
                let mut it = executed.iter();
                steps.iter().all(|want| it.any(|got| same_step(want, got)))
            }
            GoalSpec::All { goals } => goals.iter().all(|g| g.holds(state, executed)),
        }
    }
}

fn same_step(want: &ActionCall, got: &ActionCall) -> bool {
    want.name == got.name
        && want.args.len() == got.args.len()
        && want.args.iter().zip(&got.args).all(|(a, b)| class_key(a) == class_key(b))
}

fn color_of<'a>(name: &'a str, kind: &str) -> Option<&'a str> {
    name.strip_suffix(kind).map(str::trim).filter(|c| !c.is_empty())
}

fn placement_holds(p: &PlacementPredicate, state: &WorldState) -> bool {
    let Environment::ObjectSet(s) = &*state.full else {
        return false;
    };
    match p {
        PlacementPredicate::On { pairs } => {
            pairs.iter().all(|(x, y)| state.placements.get(x).is_some_and(|at| at == y))
        }
        PlacementPredicate::EachBlockInMatchingBowl | PlacementPredicate::NoBlockInMatchingBowl => {
            let want_match = matches!(p, PlacementPredicate::EachBlockInMatchingBowl);
            s.objects.iter().filter_map(|o| Some((o, color_of(o, "block")?))).all(|(block, color)| {
                let bowl = format!("{color} bowl");
                let in_bowl = state.placements.get(block).is_some_and(|at| *at == bowl);
                if want_match {
                    !s.contains(&bowl) || in_bowl
                } else {
                    !in_bowl
                }
            })
        }
    }
}

impl fmt::Display for GoalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serde_json::to_string(self).map_err(|_| fmt::Error)?)
    }
}

/// Convenience for sub-goal goals written as text.
pub fn subgoals(items: &[&str]) -> GoalSpec {
    GoalSpec::SubgoalSequence {
        steps: items
            .iter()
            .filter_map(|s| {
                let mut w = s.split_whitespace();
                let name = ActionName::parse(w.next()?)?;
                Some(ActionCall::new(name, w))
            })
            .collect(),
    }
}
