//! Generic chat-completion exchange and recorded-fixture replay.
//!
//! The transport itself lives with the binary; the library only needs
//! something that turns a [`ChatRequest`] into a [`ChatResponse`].

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChatError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("replay exhausted after {0} exchanges")]
    ReplayExhausted(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// One recorded request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: ChatRequest,
    pub response: ChatResponse,
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError>;
}

/// Serves recorded responses in order, ignoring request content.
#[derive(Debug, Default)]
pub struct ReplayClient {
    responses: Mutex<VecDeque<ChatResponse>>,
    served: Mutex<usize>,
}

impl ReplayClient {
    pub fn new(responses: impl IntoIterator<Item = ChatResponse>) -> Self {
        ReplayClient { responses: Mutex::new(responses.into_iter().collect()), served: Mutex::new(0) }
    }

    pub fn from_exchanges(exchanges: impl IntoIterator<Item = Exchange>) -> Self {
        Self::new(exchanges.into_iter().map(|e| e.response))
    }

    /// Loads a JSON fixture holding either one exchange or an array of them.
    pub fn load_fixture(path: &Path) -> Result<Vec<Exchange>, ChatError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ChatError::Transport(format!("{}: {e}", path.display())))?;
        parse_fixture(&text)
    }

    pub fn remaining(&self) -> usize {
        self.responses.lock().unwrap().len()
    }
}

pub fn parse_fixture(text: &str) -> Result<Vec<Exchange>, ChatError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ChatError::Malformed(e.to_string()))?;
    let exchanges = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|e: Exchange| vec![e])
    };
    exchanges.map_err(|e| ChatError::Malformed(e.to_string()))
}

impl ChatClient for ReplayClient {
    fn complete(&self, _request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        let mut served = self.served.lock().unwrap();
        let next = self.responses.lock().unwrap().pop_front();
        match next {
            Some(r) => {
                *served += 1;
                Ok(r)
            }
            None => Err(ChatError::ReplayExhausted(*served)),
        }
    }
}

/// Rough token count used when a backend reports no usage: four characters
/// per token.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

pub fn estimate_request_tokens(request: &ChatRequest) -> u64 {
    request.messages.iter().map(|m| estimate_tokens(&m.content)).sum()
}

/// Returns the body of the single fenced code block in `text`.
///
/// Zero blocks, more than one block, or an unterminated fence are errors.
pub fn extract_single_code_block(text: &str) -> Result<String, String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let fence = line.trim_start().starts_with("```");
        match (&mut current, fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(body), true) => {
                blocks.push(body.join("\n"));
                current = None;
            }
            (Some(body), false) => body.push(line),
            (None, false) => {}
        }
    }
    if current.is_some() {
        return Err("response contains an unterminated code fence".into());
    }
    match blocks.len() {
        1 => {
            let mut body = blocks.pop().unwrap();
            body.push('\n');
            Ok(body)
        }
        0 => Err("response contains no fenced code block; the full revised source must be \
                  returned in exactly one fenced code block"
            .into()),
        n => Err(format!(
            "response contains {n} fenced code blocks; the full revised source must be returned \
             in exactly one fenced code block"
        )),
    }
}
