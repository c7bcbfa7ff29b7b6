//! Planner prompts, response parsing, and canonical rendering for the three
//! dialects.
//!
//! Parsers are deliberately forgiving about the noise small models emit
//! (single-quoted pseudo-JSON, line wraps inside strings, a missing closing
//! bracket, trailing commas) but report the byte offset of the first thing
//! they cannot make sense of.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::action::{ActionCall, ActionName, Dialect};
use crate::chat::{ChatMessage, ChatMessages};
use crate::util::{balanced_braces, squash_ws, strip_quotes};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("parse error at byte {offset}: {message} (expected {expected})")]
pub struct ParseError {
    pub offset: usize,
    pub expected: String,
    pub message: String,
}

impl ParseError {
    fn new(offset: usize, expected: impl Into<String>, message: impl Into<String>) -> Self {
        Self { offset, expected: expected.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerResponse {
    pub dialect: Dialect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_goal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant_graph: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    pub plan: Vec<ActionCall>,
}

impl PlannerResponse {
    pub fn new(dialect: Dialect, plan: Vec<ActionCall>) -> Self {
        Self { dialect, primary_goal: None, relevant_graph: None, reasoning: None, plan }
    }
}

pub fn parse_response(dialect: Dialect, raw: &str) -> Result<PlannerResponse, ParseError> {
    match dialect {
        Dialect::Spine => parse_spine(raw),
        Dialect::SayCan => parse_saycan(raw),
        Dialect::LlmPlanner => parse_llm_planner(raw),
    }
}

/// Canonical text for a response. Parsing the result yields the same
/// response, so training targets are always parseable.
pub fn render_response(r: &PlannerResponse) -> String {
    match r.dialect {
        Dialect::Spine => {
            #[derive(Serialize)]
            struct Canon<'a> {
                #[serde(skip_serializing_if = "Option::is_none")]
                primary_goal: Option<&'a str>,
                #[serde(skip_serializing_if = "Option::is_none")]
                relevant_graph: Option<&'a str>,
                #[serde(skip_serializing_if = "Option::is_none")]
                reasoning: Option<&'a str>,
                plan: String,
            }
            let c = Canon {
                primary_goal: r.primary_goal.as_deref(),
                relevant_graph: r.relevant_graph.as_deref(),
                reasoning: r.reasoning.as_deref(),
                plan: render_plan(Dialect::Spine, &r.plan),
            };
            serde_json::to_string(&c).expect("response serializes")
        }
        d => render_plan(d, &r.plan),
    }
}

pub fn render_plan(dialect: Dialect, plan: &[ActionCall]) -> String {
    let items: Vec<String> = plan.iter().map(ActionCall::render).collect();
    match dialect {
        Dialect::Spine => format!("[{}]", items.join(", ")),
        Dialect::SayCan => items.join("\n"),
        Dialect::LlmPlanner => items.join(", "),
    }
}

fn clean_arg(s: &str) -> String {
    squash_ws(strip_quotes(&squash_ws(s)))
}

fn is_quote(b: u8) -> bool {
    matches!(b, b'"' | b'\'' | b'`')
}

/// Parses `[call, call, ...]` (brackets optional) where a call is
/// `name(arg, ...)`. `base` is added to every reported offset.
pub fn parse_call_list(text: &str, base: usize, dialect: Dialect) -> Result<Vec<ActionCall>, ParseError> {
    let b = text.as_bytes();
    let skip = |mut p: usize, end: usize, extra: &dyn Fn(u8) -> bool| {
        while p < end && (b[p].is_ascii_whitespace() || extra(b[p])) {
            p += 1;
        }
        p
    };
    let mut end = b.len();
    let mut pos = skip(0, end, &is_quote);
    if pos < end && b[pos] == b'[' {
        pos += 1;
        if let Some(close) = text.rfind(']') {
            if close >= pos {
                end = close;
            }
        }
    }
    let mut calls = Vec::new();
    loop {
        pos = skip(pos, end, &|c| c == b',' || is_quote(c));
        if pos >= end {
            break;
        }
        let ident_start = pos;
        while pos < end && (b[pos].is_ascii_alphanumeric() || b[pos] == b'_' || b[pos] == b'.') {
            pos += 1;
        }
        if pos == ident_start {
            let ch = text[pos..].chars().next().unwrap_or(' ');
            return Err(ParseError::new(base + pos, "action name", format!("unexpected character {ch:?}")));
        }
        let ident = &text[ident_start..pos];
        let name = ActionName::parse(ident).filter(|n| n.dialect() == dialect).ok_or_else(|| {
            ParseError::new(base + ident_start, format!("a {dialect} action"), format!("unknown action {ident:?}"))
        })?;
        pos = skip(pos, end, &|_| false);
        if pos >= end || b[pos] != b'(' {
            return Err(ParseError::new(base + pos, "'('", format!("missing argument list after {ident}")));
        }
        let open = pos;
        pos += 1;
        let args: Vec<String> = if name == ActionName::Answer {
            // The answer text may itself contain parentheses and commas.
            let close = text[..end]
                .rfind(')')
                .filter(|&c| c > open)
                .ok_or_else(|| ParseError::new(base + end, "')'", "unterminated answer"))?;
            pos = close + 1;
            vec![clean_arg(&text[open + 1..close])]
        } else {
            let max_splits = if name == ActionName::Inspect { 1 } else { usize::MAX };
            let mut parts: Vec<&str> = Vec::new();
            let mut seg = open + 1;
            let mut depth = 1usize;
            loop {
                if pos >= end {
                    return Err(ParseError::new(base + pos, "')'", format!("unterminated call to {ident}")));
                }
                match b[pos] {
                    b'(' => depth += 1,
                    b')' => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    b',' if depth == 1 && parts.len() < max_splits => {
                        parts.push(&text[seg..pos]);
                        seg = pos + 1;
                    }
                    _ => {}
                }
                pos += 1;
            }
            parts.push(&text[seg..pos]);
            pos += 1;
            if parts.len() == 1 && parts[0].trim().is_empty() {
                Vec::new()
            } else {
                parts.into_iter().map(clean_arg).collect()
            }
        };
        let call = ActionCall { name, args };
        call.check().map_err(|m| ParseError::new(base + ident_start, "well-formed arguments", m))?;
        calls.push(call);
        let next = skip(pos, end, &is_quote);
        if next < end && b[next] != b',' {
            let ch = text[next..].chars().next().unwrap_or(' ');
            return Err(ParseError::new(base + next, "',' or ']'", format!("unexpected character {ch:?}")));
        }
        pos = next;
    }
    if calls.is_empty() {
        return Err(ParseError::new(base + pos.min(b.len()), "at least one action", "empty plan"));
    }
    Ok(calls)
}

const SPINE_KEYS: [&str; 4] = ["primary_goal", "relevant_graph", "reasoning", "plan"];

fn spine_key_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"["'](primary_goal|relevant_graph|reasoning|plan)["']\s*:"#).expect("valid regex"))
}

fn parse_spine(raw: &str) -> Result<PlannerResponse, ParseError> {
    let Some((start, end)) = balanced_braces(raw, 0) else {
        // Bare plan with no surrounding object.
        let plan = parse_call_list(raw, 0, Dialect::Spine)?;
        return Ok(PlannerResponse::new(Dialect::Spine, plan));
    };
    if let Some(end) = end {
        if let Ok(Value::Object(m)) = serde_json::from_str::<Value>(&raw[start..end]) {
            return spine_from_json(raw, start, &m);
        }
    }
    spine_lenient(raw, start)
}

fn text_field(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::Null => None,
        Value::String(s) => Some(squash_ws(s)),
        other => Some(other.to_string()),
    }
}

fn spine_from_json(raw: &str, start: usize, m: &serde_json::Map<String, Value>) -> Result<PlannerResponse, ParseError> {
    let key_offset = raw[start..].find("\"plan\"").map(|i| start + i).unwrap_or(start);
    let plan = match m.get("plan") {
        Some(Value::String(s)) => {
            let base = raw[start..].find(s.as_str()).map(|i| start + i).unwrap_or(key_offset);
            parse_call_list(s, base, Dialect::Spine)?
        }
        Some(Value::Array(items)) => {
            let joined: Vec<String> =
                items.iter().map(|v| v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string())).collect();
            parse_call_list(&format!("[{}]", joined.join(", ")), key_offset, Dialect::Spine)?
        }
        Some(_) => return Err(ParseError::new(key_offset, "a plan string or list", "plan has the wrong type")),
        None => return Err(ParseError::new(start, "a \"plan\" field", "response has no plan")),
    };
    Ok(PlannerResponse {
        dialect: Dialect::Spine,
        primary_goal: text_field(m.get("primary_goal")),
        relevant_graph: text_field(m.get("relevant_graph")),
        reasoning: text_field(m.get("reasoning")),
        plan,
    })
}

/// Key scan for pseudo-JSON: each field's value runs to the next key.
fn spine_lenient(raw: &str, start: usize) -> Result<PlannerResponse, ParseError> {
    let mut marks: Vec<(usize, usize, usize)> = Vec::new(); // (key index, match start, value start)
    for c in spine_key_re().captures_iter(&raw[start..]) {
        let key = c.get(1).expect("group").as_str();
        let ki = SPINE_KEYS.iter().position(|k| *k == key).expect("known key");
        if marks.iter().any(|m| m.0 == ki) {
            continue;
        }
        let whole = c.get(0).expect("match");
        marks.push((ki, start + whole.start(), start + whole.end()));
    }
    let Some(plan_pos) = marks.iter().position(|m| m.0 == 3) else {
        return Err(ParseError::new(start, "a 'plan' field", "response has no plan"));
    };
    let span = |i: usize| -> (usize, usize, bool) {
        let from = marks[i].2;
        let to = marks.get(i + 1).map(|m| m.1).unwrap_or(raw.len());
        (from, to, i + 1 == marks.len())
    };
    let mut fields: [Option<String>; 3] = [None, None, None];
    for (i, m) in marks.iter().enumerate() {
        if m.0 == 3 {
            continue;
        }
        let (from, to, last) = span(i);
        fields[m.0] = Some(trim_value(&raw[from..to], last).to_string()).map(|s| squash_ws(strip_quotes(&s)));
    }
    let (from, to, last) = span(plan_pos);
    let value = trim_value(&raw[from..to], last);
    let lead = raw[from..to].len() - raw[from..to].trim_start().len();
    let plan = parse_call_list(value, from + lead, Dialect::Spine)?;
    let [primary_goal, relevant_graph, reasoning] = fields;
    Ok(PlannerResponse { dialect: Dialect::Spine, primary_goal, relevant_graph, reasoning, plan })
}

/// Drops the separator after a field value and, for the final field, the
/// closing brace of the object.
fn trim_value(v: &str, last: bool) -> &str {
    let mut t = v.trim();
    if last {
        if let Some(close) = t.rfind('}') {
            if t[close + 1..].trim().is_empty() {
                t = t[..close].trim_end();
            }
        }
    }
    t = t.strip_suffix(',').unwrap_or(t).trim_end();
    t
}

fn parse_saycan(raw: &str) -> Result<PlannerResponse, ParseError> {
    let mut plan = Vec::new();
    let mut offset = 0;
    'lines: for line in raw.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with("objects") || t.starts_with("```") {
            continue;
        }
        let lead = line.len() - line.trim_start().len();
        let body = t.trim_end_matches(';');
        for call in parse_call_list(body, line_start + lead, Dialect::SayCan)? {
            let done = call.name == ActionName::Done;
            plan.push(call);
            if done {
                break 'lines;
            }
        }
    }
    if plan.is_empty() {
        return Err(ParseError::new(raw.len(), "robot.pick_and_place(...) or done()", "empty plan"));
    }
    Ok(PlannerResponse::new(Dialect::SayCan, plan))
}

fn parse_llm_planner(raw: &str) -> Result<PlannerResponse, ParseError> {
    let mut items: Vec<(usize, String)> = Vec::new();
    let lead = raw.len() - raw.trim_start().len();
    let list: Option<Vec<String>> =
        raw.trim_start().starts_with('[').then(|| serde_json::from_str(raw.trim()).ok()).flatten();
    if let Some(list) = list {
        for s in list {
            let off = raw.find(s.as_str()).unwrap_or(lead);
            items.push((off, s));
        }
    } else {
        let mut seg = 0;
        for (i, c) in raw.char_indices() {
            if matches!(c, ',' | '\n' | ';') {
                items.push((seg, raw[seg..i].to_string()));
                seg = i + c.len_utf8();
            }
        }
        items.push((seg, raw[seg..].to_string()));
    }
    let mut plan = Vec::new();
    for (off, item) in items {
        let body = strip_quotes(item.trim().trim_start_matches('[').trim_end_matches(']'));
        let body = strip_quotes(body.trim_end_matches('.'));
        if body.is_empty() {
            continue;
        }
        let at = off + item.find(body).unwrap_or(0);
        let mut words = body.split_whitespace();
        let verb = words.next().unwrap_or("");
        let name = ActionName::parse(verb)
            .filter(|n| n.dialect() == Dialect::LlmPlanner)
            .ok_or_else(|| ParseError::new(at, "a sub-goal verb", format!("unknown sub-goal {verb:?}")))?;
        let rest: Vec<&str> = words.collect();
        let args: Vec<String> = match name {
            ActionName::PutObject => rest.iter().map(|w| strip_quotes(w).to_string()).collect(),
            _ if rest.is_empty() => Vec::new(),
            _ => vec![clean_arg(&rest.join(" "))],
        };
        let call = ActionCall { name, args };
        call.check().map_err(|m| ParseError::new(at, "well-formed arguments", m))?;
        plan.push(call);
    }
    if plan.is_empty() {
        return Err(ParseError::new(raw.len(), "a sub-goal", "empty plan"));
    }
    Ok(PlannerResponse::new(Dialect::LlmPlanner, plan))
}

const SPINE_SYSTEM: &str = include_str!("../assets/prompts/planner_spine.txt");
const SAYCAN_SYSTEM: &str = include_str!("../assets/prompts/planner_saycan.txt");
const LLM_PLANNER_SYSTEM: &str = include_str!("../assets/prompts/planner_llm_planner.txt");

/// Planner system prompt with the task substituted in.
pub fn render_system_prompt(dialect: Dialect, task: &str) -> String {
    let template = match dialect {
        Dialect::Spine => SPINE_SYSTEM,
        Dialect::SayCan => SAYCAN_SYSTEM,
        Dialect::LlmPlanner => LLM_PLANNER_SYSTEM,
    };
    template.replace("{{TASK}}", task.trim())
}

/// Reads the task back out of a rendered system prompt.
pub fn task_from_system_prompt(system: &str) -> Option<&str> {
    system.lines().rev().find_map(|l| l.strip_prefix("Task: ")).map(str::trim)
}

/// System prompt plus the first user turn carrying the initial observation.
pub fn initial_messages(dialect: Dialect, task: &str, observation: &str) -> ChatMessages {
    ChatMessages::new(render_system_prompt(dialect, task)).with(ChatMessage::user(observation))
}
