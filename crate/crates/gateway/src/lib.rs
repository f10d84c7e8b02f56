//! Transport between simulated agents and chat-completion model servers.
//!
//! Agents never talk to a server directly. They build a [`ChatRequest`] and hand
//! it to a [`Gateway`], which enforces the in-flight bound, retries transient
//! failures with exponential backoff, and appends every exchange to a
//! [`Transcript`]. Two backends exist: an HTTP client for chat-completions
//! compatible endpoints, and a seeded [`MockPolicy`] that makes offline runs
//! fully reproducible.

mod config;
mod error;
mod gateway;
mod http;
mod mock;
mod request;
mod transcript;

pub use config::{Backend, GatewayConfig};
pub use error::GatewayError;
pub use gateway::{ChatReply, Gateway};
pub use http::HttpBackend;
pub use mock::{mock_chat, MockMode, MockPolicy, MALFORMED_REPLY};
pub use request::{AgentRole, ChatRequest, MockHint};
pub use transcript::{Transcript, TranscriptEntry};

/// Anything that can turn a request into reply text.
///
/// Implementations are called through [`Gateway`], which owns retries and
/// logging, so a backend only has to perform a single attempt.
pub trait ChatBackend: Send + Sync {
    fn send(&self, req: &ChatRequest) -> Result<String, GatewayError>;

    /// Mock backends are pure and may be called in any order.
    fn is_mock(&self) -> bool {
        false
    }
}
