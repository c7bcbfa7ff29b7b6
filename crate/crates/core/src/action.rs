//! Planner dialects and the action calls they can express.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    /// Scene-graph mapping and exploration planner with JSON responses.
    Spine,
    /// Tabletop pick-and-place scripts ending in `done()`.
    #[serde(rename = "saycan")]
    SayCan,
    /// Comma-separated `Verb Object` sub-goals.
    LlmPlanner,
}

impl Dialect {
    pub const ALL: [Dialect; 3] = [Dialect::Spine, Dialect::SayCan, Dialect::LlmPlanner];

    pub fn as_str(self) -> &'static str {
        match self {
            Dialect::Spine => "spine",
            Dialect::SayCan => "saycan",
            Dialect::LlmPlanner => "llm_planner",
        }
    }

    pub fn uses_scene_graph(self) -> bool {
        self == Dialect::Spine
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dialect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "spine" => Ok(Dialect::Spine),
            "saycan" => Ok(Dialect::SayCan),
            "llm_planner" | "llmplanner" => Ok(Dialect::LlmPlanner),
            other => Err(format!("unknown dialect {other:?} (expected spine, saycan, or llm_planner)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionName {
    #[serde(rename = "goto")]
    Goto,
    #[serde(rename = "map_region")]
    MapRegion,
    #[serde(rename = "explore_region")]
    ExploreRegion,
    #[serde(rename = "inspect")]
    Inspect,
    #[serde(rename = "answer")]
    Answer,
    #[serde(rename = "pick_and_place")]
    PickAndPlace,
    #[serde(rename = "done")]
    Done,
    Navigation,
    PickupObject,
    PutObject,
    OpenObject,
    CloseObject,
    ToggleObjectOn,
    ToggleObjectOff,
    SliceObject,
}

impl ActionName {
    pub const ALL: [ActionName; 15] = [
        ActionName::Goto,
        ActionName::MapRegion,
        ActionName::ExploreRegion,
        ActionName::Inspect,
        ActionName::Answer,
        ActionName::PickAndPlace,
        ActionName::Done,
        ActionName::Navigation,
        ActionName::PickupObject,
        ActionName::PutObject,
        ActionName::OpenObject,
        ActionName::CloseObject,
        ActionName::ToggleObjectOn,
        ActionName::ToggleObjectOff,
        ActionName::SliceObject,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionName::Goto => "goto",
            ActionName::MapRegion => "map_region",
            ActionName::ExploreRegion => "explore_region",
            ActionName::Inspect => "inspect",
            ActionName::Answer => "answer",
            ActionName::PickAndPlace => "pick_and_place",
            ActionName::Done => "done",
            ActionName::Navigation => "Navigation",
            ActionName::PickupObject => "PickupObject",
            ActionName::PutObject => "PutObject",
            ActionName::OpenObject => "OpenObject",
            ActionName::CloseObject => "CloseObject",
            ActionName::ToggleObjectOn => "ToggleObjectOn",
            ActionName::ToggleObjectOff => "ToggleObjectOff",
            ActionName::SliceObject => "SliceObject",
        }
    }

    pub fn dialect(self) -> Dialect {
        use ActionName::*;
        match self {
            Goto | MapRegion | ExploreRegion | Inspect | Answer => Dialect::Spine,
            PickAndPlace | Done => Dialect::SayCan,
            _ => Dialect::LlmPlanner,
        }
    }

    /// Inclusive bounds on the argument count.
    pub fn arity(self) -> (usize, usize) {
        use ActionName::*;
        match self {
            Done => (0, 0),
            ExploreRegion | PickAndPlace => (2, 2),
            Inspect | PutObject => (1, 2),
            _ => (1, 1),
        }
    }

    pub fn for_dialect(dialect: Dialect) -> impl Iterator<Item = ActionName> {
        Self::ALL.into_iter().filter(move |a| a.dialect() == dialect)
    }

    /// Case-insensitive lookup that also accepts a `robot.` prefix and the
    /// alternate sub-goal spellings (`PickObject`, `ToggleOnObject`, ...).
    pub fn parse(s: &str) -> Option<ActionName> {
        let s = s.trim();
        let s = s.strip_prefix("robot.").unwrap_or(s);
        let key = s.to_ascii_lowercase();
        let alias = match key.as_str() {
            "pickobject" => Some(ActionName::PickupObject),
            "toggleonobject" => Some(ActionName::ToggleObjectOn),
            "toggleoffobject" => Some(ActionName::ToggleObjectOff),
            "navigate" => Some(ActionName::Navigation),
            _ => None,
        };
        alias.or_else(|| Self::ALL.into_iter().find(|a| a.as_str().to_ascii_lowercase() == key))
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, ActionName::Answer | ActionName::Done)
    }
}

impl fmt::Display for ActionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionCall {
    pub name: ActionName,
    pub args: Vec<String>,
}

impl ActionCall {
    pub fn new<I, S>(name: ActionName, args: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { name, args: args.into_iter().map(Into::into).collect() }
    }

    pub fn arg(&self, i: usize) -> &str {
        self.args.get(i).map(String::as_str).unwrap_or("")
    }

    /// Arity and argument-type check against the dialect grammar.
    pub fn check(&self) -> Result<(), String> {
        let (lo, hi) = self.name.arity();
        let n = self.args.len();
        if n < lo || n > hi {
            let want = if lo == hi { format!("{lo}") } else { format!("{lo} to {hi}") };
            return Err(format!("{} takes {want} argument(s), got {n}", self.name));
        }
        if let Some(a) = self.args.iter().find(|a| a.trim().is_empty()) {
            if !(self.name == ActionName::Answer && self.args.len() == 1) {
                return Err(format!("{} has an empty argument {a:?}", self.name));
            }
        }
        if self.name == ActionName::ExploreRegion {
            match self.args[1].trim().parse::<f64>() {
                Ok(r) if r.is_finite() && r >= 0.0 => {}
                _ => {
                    return Err(format!("explore_region radius must be a non-negative number, got {:?}", self.args[1]))
                }
            }
        }
        Ok(())
    }

    pub fn radius(&self) -> Option<f64> {
        (self.name == ActionName::ExploreRegion).then(|| self.args.get(1)?.trim().parse().ok()).flatten()
    }

    /// Canonical text in the action's own dialect.
    pub fn render(&self) -> String {
        match self.name.dialect() {
            Dialect::Spine => format!("{}({})", self.name, self.args.join(", ")),
            Dialect::SayCan => match self.name {
                ActionName::Done => "done()".to_string(),
                _ => format!("robot.{}({})", self.name, self.args.join(", ")),
            },
            Dialect::LlmPlanner => {
                let mut s = self.name.as_str().to_string();
                for a in &self.args {
                    s.push(' ');
                    s.push_str(a);
                }
                s
            }
        }
    }
}

impl fmt::Display for ActionCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
