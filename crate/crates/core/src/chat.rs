//! Chat message lists in the OpenAI-compatible shape.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// Ordered messages: one system message, then alternating user and
/// assistant turns starting with a user turn.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChatMessages(pub Vec<ChatMessage>);

impl ChatMessages {
    pub fn new(system: impl Into<String>) -> Self {
        Self(vec![ChatMessage::system(system)])
    }

    pub fn push(&mut self, m: ChatMessage) {
        self.0.push(m);
    }

    pub fn with(mut self, m: ChatMessage) -> Self {
        self.0.push(m);
        self
    }

    pub fn as_slice(&self) -> &[ChatMessage] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<&ChatMessage> {
        self.0.last()
    }

    pub fn assistant_turns(&self) -> usize {
        self.0.iter().filter(|m| m.role == Role::Assistant).count()
    }

    pub fn system_text(&self) -> &str {
        self.0.first().filter(|m| m.role == Role::System).map(|m| m.content.as_str()).unwrap_or("")
    }

    pub fn first_user_text(&self) -> &str {
        self.0.iter().find(|m| m.role == Role::User).map(|m| m.content.as_str()).unwrap_or("")
    }

    /// Checks the ordering rules; the list must end on a user turn to be sent.
    pub fn validate(&self) -> Result<(), String> {
        let first = self.0.first().ok_or("message list is empty")?;
        if first.role != Role::System {
            return Err(format!("first message must be system, got {}", first.role));
        }
        for (i, m) in self.0.iter().enumerate().skip(1) {
            let want = if i % 2 == 1 { Role::User } else { Role::Assistant };
            if m.role != want {
                return Err(format!("message {i} must be {want}, got {}", m.role));
            }
        }
        match self.0.last() {
            Some(m) if m.role == Role::User => Ok(()),
            _ => Err("message list must end with a user turn".to_string()),
        }
    }
}

impl From<Vec<ChatMessage>> for ChatMessages {
    fn from(v: Vec<ChatMessage>) -> Self {
        Self(v)
    }
}
