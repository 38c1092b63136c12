//! Multi-agent annotation of generated images.
//!
//! Five prompted roles run over a vision chat model: object perception,
//! attribute analysis, relation reasoning, integration and formatting. The
//! final formatter output is parsed into anomaly records. Calls are cached by
//! content address so reruns cost nothing, and token usage is accounted per
//! stage.

pub mod cache;
pub mod chat;
pub mod config;
pub mod mock;
pub mod parse;
pub mod pipeline;
pub mod prompts;

pub use cache::{StageCache, StageKey};
pub use chat::{ChatBackend, ChatError, ChatReply, ChatRequest, HttpChatBackend};
pub use config::{AgentConfig, ConfigError};
pub use mock::MockBackend;
pub use parse::{CandidateAnomaly, DetectedObject, Origin};
pub use pipeline::{ImageInput, Pipeline, PipelineError, PipelineState, RunStats, TokenLedger, TokenUsage};
pub use prompts::Stage;
