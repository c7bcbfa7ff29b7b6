//! Observation deltas: the update calls a planner sees after acting.
//!
//! ```text
//! add_nodes({name: {coords: [x, y], type: region|object, name: name}}, ...)
//! remove_node(name)
//! add_connections([a, b], ...)
//! remove_connections([a, b], ...)
//! update_robot_location(name)
//! update_node_attributes({name: name, description: text})
//! add_objects(a, b, ...)
//! update_placement(object, location)
//! completed(action)
//! InfeasibleAction: reason
//! ```
//!
//! Calls are separated by `,` and a newline. The parser also accepts
//! `description:` inside `add_nodes` entries and arbitrary line wrapping.

use serde::{Deserialize, Serialize};

use crate::env_model::{Edge, NodeKind};
use crate::plan_io::ParseError;
use crate::util::squash_ws;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAnnouncement {
    pub name: String,
    pub coords: [f64; 2],
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum DeltaOp {
    AddNodes { nodes: Vec<NodeAnnouncement> },
    RemoveNode { name: String },
    AddConnections { edges: Vec<Edge> },
    RemoveConnections { edges: Vec<Edge> },
    UpdateRobotLocation { name: String },
    UpdateNodeAttributes { name: String, description: String },
    AddObjects { names: Vec<String> },
    UpdatePlacement { object: String, location: String },
    Completed { action: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaKind {
    Reveal,
    Move,
    Attribute,
    Feedback,
    Terminal,
}

impl DeltaKind {
    /// Whether the planner should get control back after this delta.
    pub fn is_informative(self) -> bool {
        self != DeltaKind::Move
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum TerminalReason {
    Answered { message: String },
    Done,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DeltaPayload {
    Ops { ops: Vec<DeltaOp> },
    Feedback { message: String },
    Terminal { reason: TerminalReason },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationDelta {
    pub kind: DeltaKind,
    pub payload: DeltaPayload,
    pub rendered: String,
}

pub const FEEDBACK_PREFIX: &str = "InfeasibleAction:";

impl ObservationDelta {
    pub fn from_ops(ops: Vec<DeltaOp>) -> Self {
        let kind = classify(&ops);
        let rendered = render_ops(&ops);
        Self { kind, payload: DeltaPayload::Ops { ops }, rendered }
    }

    pub fn feedback(message: impl Into<String>) -> Self {
        let message = squash_ws(&message.into());
        Self {
            kind: DeltaKind::Feedback,
            rendered: format!("{FEEDBACK_PREFIX} {message}"),
            payload: DeltaPayload::Feedback { message },
        }
    }

    pub fn terminal(reason: TerminalReason) -> Self {
        let rendered = match &reason {
            TerminalReason::Answered { .. } => "episode finished: answered".to_string(),
            TerminalReason::Done => "episode finished: done".to_string(),
            TerminalReason::Timeout => "episode finished: out of iterations".to_string(),
        };
        Self { kind: DeltaKind::Terminal, payload: DeltaPayload::Terminal { reason }, rendered }
    }

    pub fn ops(&self) -> &[DeltaOp] {
        match &self.payload {
            DeltaPayload::Ops { ops } => ops,
            _ => &[],
        }
    }
}

/// Reveal outranks attribute updates, which outrank plain moves.
pub fn classify(ops: &[DeltaOp]) -> DeltaKind {
    let reveal = ops
        .iter()
        .any(|o| matches!(o, DeltaOp::AddNodes { .. } | DeltaOp::AddConnections { .. } | DeltaOp::AddObjects { .. }));
    if reveal {
        DeltaKind::Reveal
    } else if ops.iter().any(|o| matches!(o, DeltaOp::UpdateNodeAttributes { .. })) {
        DeltaKind::Attribute
    } else {
        DeltaKind::Move
    }
}

/// Makes free text safe to embed in a delta call.
pub fn sanitize_text(s: &str) -> String {
    squash_ws(&s.replace('{', "(").replace('}', ")"))
}

fn fmt_edges(edges: &[Edge]) -> String {
    edges.iter().map(|(a, b)| format!("[{a}, {b}]")).collect::<Vec<_>>().join(", ")
}

pub fn render_op(op: &DeltaOp) -> String {
    match op {
        DeltaOp::AddNodes { nodes } => {
            let entries: Vec<String> = nodes
                .iter()
                .map(|n| {
                    let desc = n
                        .description
                        .as_ref()
                        .map(|d| format!(", description: {}", sanitize_text(d)))
                        .unwrap_or_default();
                    format!(
                        "{{{}: {{coords: [{:?}, {:?}], type: {}{desc}, name: {}}}}}",
                        n.name, n.coords[0], n.coords[1], n.kind, n.name
                    )
                })
                .collect();
            format!("add_nodes({})", entries.join(", "))
        }
        DeltaOp::RemoveNode { name } => format!("remove_node({name})"),
        DeltaOp::AddConnections { edges } => format!("add_connections({})", fmt_edges(edges)),
        DeltaOp::RemoveConnections { edges } => format!("remove_connections({})", fmt_edges(edges)),
        DeltaOp::UpdateRobotLocation { name } => format!("update_robot_location({name})"),
        DeltaOp::UpdateNodeAttributes { name, description } => {
            format!("update_node_attributes({{name: {name}, description: {}}})", sanitize_text(description))
        }
        DeltaOp::AddObjects { names } => format!("add_objects({})", names.join(", ")),
        DeltaOp::UpdatePlacement { object, location } => format!("update_placement({object}, {location})"),
        DeltaOp::Completed { action } => format!("completed({action})"),
    }
}

pub fn render_ops(ops: &[DeltaOp]) -> String {
    ops.iter().map(render_op).collect::<Vec<_>>().join(",\n")
}

/// A parsed observation turn: update calls, optionally followed by an
/// infeasibility message.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedObservation {
    pub ops: Vec<DeltaOp>,
    pub feedback: Option<String>,
}

struct Cursor<'a> {
    s: &'a str,
    b: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(s: &'a str) -> Self {
        Self { s, b: s.as_bytes(), pos: 0 }
    }

    fn err(&self, expected: &str, message: impl Into<String>) -> ParseError {
        ParseError { offset: self.pos, expected: expected.to_string(), message: message.into() }
    }

    fn ws(&mut self) {
        while self.pos < self.b.len() && self.b[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.b.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        self.ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("'{}'", c as char), "unexpected input"))
        }
    }

    fn ident(&mut self) -> &'a str {
        self.ws();
        let start = self.pos;
        while self.pos < self.b.len() && (self.b[self.pos].is_ascii_alphanumeric() || self.b[self.pos] == b'_') {
            self.pos += 1;
        }
        &self.s[start..self.pos]
    }

    /// Text up to (not including) the first byte in `stops`.
    fn until_any(&mut self, stops: &[u8]) -> Result<String, ParseError> {
        let start = self.pos;
        while self.pos < self.b.len() && !stops.contains(&self.b[self.pos]) {
            self.pos += 1;
        }
        if self.pos >= self.b.len() {
            return Err(self.err("a closing delimiter", "unexpected end of observation"));
        }
        Ok(squash_ws(&self.s[start..self.pos]))
    }

    /// Free text up to the earliest of `stops` (multi-byte markers).
    fn until_marker(&mut self, stops: &[&str]) -> Result<String, ParseError> {
        let rest = &self.s[self.pos..];
        let cut = stops
            .iter()
            .filter_map(|m| rest.find(m))
            .min()
            .ok_or_else(|| self.err("end of text value", "unterminated text"))?;
        let text = squash_ws(&rest[..cut]);
        self.pos += cut;
        Ok(text)
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        self.ws();
        let start = self.pos;
        while self.pos < self.b.len() && matches!(self.b[self.pos], b'0'..=b'9' | b'-' | b'+' | b'.' | b'e' | b'E') {
            self.pos += 1;
        }
        self.s[start..self.pos].parse().map_err(|_| ParseError {
            offset: start,
            expected: "a number".into(),
            message: format!("bad number {:?}", &self.s[start..self.pos]),
        })
    }

    fn pair(&mut self) -> Result<Edge, ParseError> {
        self.expect(b'[')?;
        self.ws();
        let a = self.until_any(b",")?;
        self.pos += 1;
        self.ws();
        let b = self.until_any(b"]")?;
        self.pos += 1;
        Ok((a, b))
    }

    /// `key: value, key: value` up to the closing brace (not consumed).
    fn attrs(&mut self) -> Result<Attrs, ParseError> {
        const TEXT_END: [&str; 4] = [", name:", ", type:", ", coords:", "}"];
        let mut out = Attrs::default();
        loop {
            let key = self.ident();
            self.expect(b':')?;
            self.ws();
            match key {
                "coords" => {
                    self.expect(b'[')?;
                    let x = self.number()?;
                    self.expect(b',')?;
                    let y = self.number()?;
                    self.expect(b']')?;
                    out.coords = Some([x, y]);
                }
                "type" => {
                    out.kind = Some(match self.ident() {
                        "region" => NodeKind::Region,
                        "object" => NodeKind::Object,
                        other => return Err(self.err("region or object", format!("unknown node type {other:?}"))),
                    })
                }
                "name" => out.name = Some(self.until_any(b",}")?),
                "description" => out.description = Some(self.until_marker(&TEXT_END)?),
                other => return Err(self.err("coords, type, name, or description", format!("unknown key {other:?}"))),
            }
            if !self.eat(b',') {
                break;
            }
        }
        Ok(out)
    }

    fn name_list(&mut self) -> Result<Vec<String>, ParseError> {
        let mut names = Vec::new();
        loop {
            self.ws();
            let n = self.until_any(b",)")?;
            if !n.is_empty() {
                names.push(n);
            }
            if self.peek() == Some(b')') {
                self.pos += 1;
                return Ok(names);
            }
            self.pos += 1;
        }
    }
}

#[derive(Default)]
struct Attrs {
    name: Option<String>,
    coords: Option<[f64; 2]>,
    kind: Option<NodeKind>,
    description: Option<String>,
}

pub fn parse_ops(text: &str) -> Result<Vec<DeltaOp>, ParseError> {
    let p = parse_observation(text)?;
    if p.feedback.is_some() {
        return Err(ParseError {
            offset: text.find(FEEDBACK_PREFIX).unwrap_or(0),
            expected: "an update call".into(),
            message: "observation carries infeasibility feedback".into(),
        });
    }
    Ok(p.ops)
}

pub fn parse_observation(text: &str) -> Result<ParsedObservation, ParseError> {
    let mut c = Cursor::new(text);
    let mut out = ParsedObservation::default();
    loop {
        while c.pos < c.b.len() && (c.b[c.pos].is_ascii_whitespace() || matches!(c.b[c.pos], b',' | b'\'' | b'"')) {
            c.pos += 1;
        }
        if c.pos >= c.b.len() {
            return Ok(out);
        }
        if text[c.pos..].starts_with(FEEDBACK_PREFIX) {
            out.feedback = Some(squash_ws(&text[c.pos + FEEDBACK_PREFIX.len()..]));
            return Ok(out);
        }
        let start = c.pos;
        let name = c.ident();
        if name.is_empty() {
            return Err(c.err("an update call", "unexpected character"));
        }
        c.expect(b'(')?;
        let op = match name {
            "add_nodes" => {
                let mut nodes = Vec::new();
                loop {
                    c.expect(b'{')?;
                    c.ws();
                    let key = c.until_any(b":")?;
                    c.pos += 1;
                    c.expect(b'{')?;
                    let a = c.attrs()?;
                    c.expect(b'}')?;
                    c.expect(b'}')?;
                    nodes.push(NodeAnnouncement {
                        name: a.name.unwrap_or(key),
                        coords: a.coords.ok_or_else(|| c.err("coords", "node entry without coords"))?,
                        kind: a.kind.ok_or_else(|| c.err("type", "node entry without type"))?,
                        description: a.description,
                    });
                    if !c.eat(b',') {
                        break;
                    }
                }
                c.expect(b')')?;
                DeltaOp::AddNodes { nodes }
            }
            "add_connections" | "remove_connections" => {
                let mut edges = Vec::new();
                loop {
                    edges.push(c.pair()?);
                    if !c.eat(b',') {
                        break;
                    }
                }
                c.expect(b')')?;
                if name == "add_connections" {
                    DeltaOp::AddConnections { edges }
                } else {
                    DeltaOp::RemoveConnections { edges }
                }
            }
            "update_robot_location" | "remove_node" => {
                let n = c.until_any(b")")?;
                c.pos += 1;
                if name == "remove_node" {
                    DeltaOp::RemoveNode { name: n }
                } else {
                    DeltaOp::UpdateRobotLocation { name: n }
                }
            }
            "update_node_attributes" => {
                c.expect(b'{')?;
                let a = c.attrs()?;
                c.expect(b'}')?;
                c.expect(b')')?;
                DeltaOp::UpdateNodeAttributes {
                    name: a.name.ok_or_else(|| c.err("name", "attribute update without a name"))?,
                    description: a.description.unwrap_or_default(),
                }
            }
            "add_objects" => DeltaOp::AddObjects { names: c.name_list()? },
            "update_placement" => {
                let mut names = c.name_list()?;
                if names.len() != 2 {
                    return Err(c.err("two arguments", "update_placement takes an object and a location"));
                }
                let location = names.pop().expect("two names");
                let object = names.pop().expect("two names");
                DeltaOp::UpdatePlacement { object, location }
            }
            "completed" => {
                let open = c.pos;
                let mut depth = 1usize;
                while c.pos < c.b.len() {
                    match c.b[c.pos] {
                        b'(' => depth += 1,
                        b')' => {
                            depth -= 1;
                            if depth == 0 {
                                break;
                            }
                        }
                        _ => {}
                    }
                    c.pos += 1;
                }
                if depth != 0 {
                    return Err(c.err("')'", "unterminated completed(...)"));
                }
                let action = squash_ws(&text[open..c.pos]);
                c.pos += 1;
                DeltaOp::Completed { action }
            }
            other => {
                return Err(ParseError {
                    offset: start,
                    expected: "an update call".into(),
                    message: format!("unknown update {other:?}"),
                })
            }
        };
        out.ops.push(op);
    }
}
