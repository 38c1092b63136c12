//! Chat-completions wire types and the HTTP backend.
//!
//! Only the OpenAI-compatible subset is used: a request carries a model id
//! and messages whose content is a list of text and image parts; a response
//! carries `choices[0].message.content` and a `usage` block.

use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: Vec<ContentPart>,
}

impl ChatMessage {
    /// A user turn with the prompt text and an optional image.
    pub fn user(text: impl Into<String>, image_url: Option<&str>) -> Self {
        let mut content = vec![ContentPart::Text { text: text.into() }];
        if let Some(url) = image_url {
            content.push(ContentPart::ImageUrl {
                image_url: ImageUrl { url: url.to_string() },
            });
        }
        Self {
            role: "user".into(),
            content,
        }
    }

    /// Concatenated text parts.
    pub fn text(&self) -> String {
        self.content
            .iter()
            .filter_map(|p| match p {
                ContentPart::Text { text } => Some(text.as_str()),
                ContentPart::ImageUrl { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    /// Text of the last user message.
    pub fn prompt_text(&self) -> String {
        self.messages.last().map(ChatMessage::text).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatReply {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ChatError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed chat response: {0}")]
    Protocol(String),
}

impl ChatError {
    /// Whether another attempt could plausibly succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            Self::Transport(_) => true,
            Self::Http { status, .. } => *status == 429 || *status >= 500,
            Self::Protocol(_) => false,
        }
    }
}

/// A vision-capable chat model.
pub trait ChatBackend: Send + Sync {
    fn model_id(&self) -> &str;

    fn send(&self, request: &ChatRequest) -> Result<ChatReply, ChatError>;
}

/// `data:<mime>;base64,<payload>` for inline image attachments.
pub fn data_uri(mime: &str, bytes: &[u8]) -> String {
    format!(
        "data:{mime};base64,{}",
        base64::engine::general_purpose::STANDARD.encode(bytes)
    )
}

/// Extract the reply from an OpenAI-style response body. Missing usage counts
/// as zero tokens.
pub fn parse_chat_response(body: &Value) -> Result<ChatReply, ChatError> {
    let content = body
        .pointer("/choices/0/message/content")
        .ok_or_else(|| ChatError::Protocol("missing choices[0].message.content".into()))?;
    let text = match content {
        Value::String(s) => s.clone(),
        // some servers answer with content parts
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join(""),
        Value::Null => String::new(),
        other => return Err(ChatError::Protocol(format!("unexpected content {other}"))),
    };
    let count = |key: &str| {
        body.get("usage")
            .and_then(|u| u.get(key))
            .and_then(Value::as_u64)
            .unwrap_or(0)
    };
    Ok(ChatReply {
        text,
        prompt_tokens: count("prompt_tokens"),
        completion_tokens: count("completion_tokens"),
    })
}

/// Blocking client for an OpenAI-compatible `/chat/completions` endpoint.
pub struct HttpChatBackend {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpChatBackend {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            agent,
        }
    }
}

impl ChatBackend for HttpChatBackend {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatReply, ChatError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(request)
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status >= 400 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ChatError::Http {
                status,
                body: body.chars().take(500).collect(),
            });
        }
        let body: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| ChatError::Protocol(e.to_string()))?;
        parse_chat_response(&body)
    }
}
