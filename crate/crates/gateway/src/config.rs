use serde::{Deserialize, Serialize};

use crate::mock::MockPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum Backend {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub backend: Backend,
    /// Base URL of a chat-completions compatible server, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env_var: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub backoff_base_secs: f64,
    pub backoff_factor: f64,
    pub temperature: f64,
    pub max_tokens: u32,
    pub mock: MockPolicy,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Mock,
            base_url: "http://localhost:8000/v1".to_string(),
            model: "meta-llama/Llama-3.1-8B-Instruct".to_string(),
            api_key_env_var: "TAXSIM_API_KEY".to_string(),
            timeout_secs: 60.0,
            max_retries: 3,
            max_in_flight: 8,
            backoff_base_secs: 0.5,
            backoff_factor: 2.0,
            temperature: 0.7,
            max_tokens: 512,
            mock: MockPolicy::default(),
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout_secs > 0.0) {
            return Err(format!("timeout_secs must be > 0, got {}", self.timeout_secs));
        }
        if self.max_in_flight < 1 {
            return Err("max_in_flight must be >= 1".to_string());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature must lie in [0, 2], got {}", self.temperature));
        }
        if self.backoff_base_secs < 0.0 || self.backoff_factor < 1.0 {
            return Err("backoff_base_secs must be >= 0 and backoff_factor >= 1".to_string());
        }
        Ok(())
    }

    /// Delay before retry number `attempt` (0-based).
    pub fn backoff_delay(&self, attempt: u32) -> std::time::Duration {
        let secs = self.backoff_base_secs * self.backoff_factor.powi(attempt as i32);
        std::time::Duration::from_secs_f64(secs.max(0.0))
    }
}
