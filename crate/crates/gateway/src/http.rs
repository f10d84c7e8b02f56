use std::time::Duration;

use serde_json::Value;

use crate::config::GatewayConfig;
use crate::error::GatewayError;
use crate::request::ChatRequest;
use crate::ChatBackend;

/// Blocking client for `POST {base_url}/chat/completions`.
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key_env_var: String,
}

impl HttpBackend {
    pub fn new(cfg: &GatewayConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build();
        let endpoint = format!("{}/chat/completions", cfg.base_url.trim_end_matches('/'));
        Self { agent, endpoint, api_key_env_var: cfg.api_key_env_var.clone() }
    }

    fn api_key(&self) -> Result<String, GatewayError> {
        match std::env::var(&self.api_key_env_var) {
            Ok(k) if !k.trim().is_empty() => Ok(k),
            _ => Err(GatewayError::AuthFailure(format!(
                "environment variable {} is not set",
                self.api_key_env_var
            ))),
        }
    }
}

impl ChatBackend for HttpBackend {
    fn send(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let key = self.api_key()?;
        let resp = self
            .agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {key}"))
            .set("Content-Type", "application/json")
            .send_json(req.wire_body());
        match resp {
            Ok(r) => {
                let body: Value = r
                    .into_json()
                    .map_err(|e| GatewayError::MalformedResponse(format!("body is not JSON: {e}")))?;
                extract_content(&body)
            }
            Err(ureq::Error::Status(code, r)) => {
                let body = r.into_string().unwrap_or_default();
                Err(classify_status(code, body))
            }
            Err(ureq::Error::Transport(t)) => Err(GatewayError::Transient(t.to_string())),
        }
    }
}

fn classify_status(code: u16, body: String) -> GatewayError {
    match code {
        401 | 403 => GatewayError::AuthFailure(format!("HTTP {code}: {body}")),
        408 | 429 | 500..=599 => GatewayError::Transient(format!("HTTP {code}")),
        _ => GatewayError::Status { status: code, body },
    }
}

/// First choice's message content of a chat-completions response.
pub(crate) fn extract_content(body: &Value) -> Result<String, GatewayError> {
    body.get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str())
        .map(str::to_owned)
        .ok_or_else(|| GatewayError::MalformedResponse("missing choices[0].message.content".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_first_choice() {
        let body = serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": "{\"LABOR\": 40}"}},
                        {"message": {"content": "ignored"}}]
        });
        assert_eq!(extract_content(&body).unwrap(), "{\"LABOR\": 40}");
    }

    #[test]
    fn missing_content_is_malformed() {
        let body = serde_json::json!({"choices": []});
        assert!(matches!(extract_content(&body), Err(GatewayError::MalformedResponse(_))));
    }

    #[test]
    fn status_classes() {
        assert!(classify_status(503, String::new()).is_retryable());
        assert!(classify_status(429, String::new()).is_retryable());
        assert!(matches!(classify_status(401, String::new()), GatewayError::AuthFailure(_)));
        assert!(!classify_status(400, String::new()).is_retryable());
    }
}
