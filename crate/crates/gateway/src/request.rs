use serde::{Deserialize, Serialize};

use crate::error::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Worker,
    Planner,
    Candidate,
    Voter,
    Judge,
}

impl AgentRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Worker => "worker",
            AgentRole::Planner => "planner",
            AgentRole::Candidate => "candidate",
            AgentRole::Voter => "voter",
            AgentRole::Judge => "judge",
        }
    }
}

/// The action a scripted agent would take in the caller's position.
///
/// Only the mock backend reads it; it is never serialized onto the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockHint {
    Labor(f64),
    Delta(Vec<f64>),
    Vote(u32),
    Verdict(bool),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_id: String,
    pub role: AgentRole,
    /// Position in the gateway's request stream; assigned by [`crate::Gateway`].
    #[serde(default)]
    pub sequence: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<MockHint>,
}

impl ChatRequest {
    pub fn new(
        role: AgentRole,
        request_id: impl Into<String>,
        system_prompt: impl Into<String>,
        user_prompt: impl Into<String>,
    ) -> Self {
        Self {
            model: String::new(),
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            temperature: 0.7,
            max_tokens: 512,
            request_id: request_id.into(),
            role,
            sequence: 0,
            hint: None,
        }
    }

    pub fn with_hint(mut self, hint: MockHint) -> Self {
        self.hint = Some(hint);
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("prompts must be nonempty".into()));
        }
        Ok(())
    }

    /// Chat-completions request body.
    pub fn wire_body(&self) -> serde_json::Value {
        serde_json::json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": self.system_prompt},
                {"role": "user", "content": self.user_prompt},
            ],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        })
    }
}
