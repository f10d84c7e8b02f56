use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error("request rejected before sending: {0}")]
    InvalidRequest(String),

    #[error("authentication failed: {0}")]
    AuthFailure(String),

    #[error("malformed response: {0}")]
    MalformedResponse(String),

    /// Timeout, connection reset, 429 or 5xx. Retried by the gateway.
    #[error("transient failure: {0}")]
    Transient(String),

    #[error("server returned HTTP {status}: {body}")]
    Status { status: u16, body: String },

    #[error("gave up after {attempts} attempts: {last}")]
    ExhaustedRetries { attempts: u32, last: String },
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Transient(_))
    }
}
