//! Seeded offline backend.
//!
//! Replies are a pure function of the policy and the request, so a mock run
//! can be repeated byte for byte. `RationalEcho` replays the scripted action
//! carried in the request's [`MockHint`], which makes a mock "LLM" population
//! behave like the scripted rational one.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::GatewayError;
use crate::request::{ChatRequest, MockHint};
use crate::ChatBackend;

/// Reply emitted when fault injection fires. Contains no JSON object.
pub const MALFORMED_REPLY: &str = "Let me think about that some more before I answer.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MockMode {
    RationalEcho,
    /// Rational echo plus uniform jitter in `[-jitter, jitter]` on each number.
    Noisy { jitter: f64 },
    /// Fixed replies, cycled by request sequence number.
    Script { replies: Vec<String> },
    /// Every `n`-th request (by sequence) gets [`MALFORMED_REPLY`]; the rest echo.
    MalformedEveryN { n: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockPolicy {
    pub seed: u64,
    pub mode: MockMode,
    /// Decimal places used when rendering numbers.
    pub precision: usize,
}

impl Default for MockPolicy {
    fn default() -> Self {
        Self { seed: 0, mode: MockMode::RationalEcho, precision: 2 }
    }
}

impl ChatBackend for MockPolicy {
    fn send(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        Ok(mock_chat(req, self))
    }

    fn is_mock(&self) -> bool {
        true
    }
}

pub fn mock_chat(req: &ChatRequest, policy: &MockPolicy) -> String {
    match &policy.mode {
        MockMode::RationalEcho => echo(req, policy, 0.0),
        MockMode::Noisy { jitter } => echo(req, policy, *jitter),
        MockMode::Script { replies } => {
            if replies.is_empty() {
                String::new()
            } else {
                replies[(req.sequence % replies.len() as u64) as usize].clone()
            }
        }
        MockMode::MalformedEveryN { n } => {
            if *n > 0 && (req.sequence + 1).is_multiple_of(*n) {
                MALFORMED_REPLY.to_string()
            } else {
                echo(req, policy, 0.0)
            }
        }
    }
}

fn echo(req: &ChatRequest, policy: &MockPolicy, jitter: f64) -> String {
    let mut noise = JitterStream::new(policy.seed, req);
    let mut num = |x: f64| -> String {
        let v = if jitter > 0.0 { x + jitter * (2.0 * noise.next_unit() - 1.0) } else { x };
        format_number(v, policy.precision)
    };
    match &req.hint {
        Some(MockHint::Labor(l)) => {
            format!("Weighing my options against last period. {{\"LABOR\": {}}}", num(*l))
        }
        Some(MockHint::Delta(d)) => {
            let parts: Vec<String> = d.iter().map(|x| num(*x)).collect();
            format!("Adjusting brackets. {{\"DELTA\": [{}]}}", parts.join(", "))
        }
        Some(MockHint::Vote(id)) => format!("I have decided. {{\"VOTE\": {id}}}"),
        Some(MockHint::Verdict(ok)) => {
            let v = if *ok { "SATISFIED" } else { "UNSATISFIED" };
            format!("Quick tally of my tax burden against my targets.\nVerdict: {v}")
        }
        Some(MockHint::Text(t)) => t.clone(),
        None => "No opinion.".to_string(),
    }
}

fn format_number(x: f64, precision: usize) -> String {
    let s = format!("{:.*}", precision, x);
    // "-0.00" is valid JSON but noisy in transcripts
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        format!("{:.*}", precision, 0.0)
    } else {
        s
    }
}

/// Deterministic uniform stream keyed on the seed and request contents.
struct JitterStream {
    state: [u8; 32],
    counter: u64,
}

impl JitterStream {
    fn new(seed: u64, req: &ChatRequest) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(req.role.as_str().as_bytes());
        h.update(req.request_id.as_bytes());
        h.update(req.sequence.to_le_bytes());
        h.update(req.system_prompt.as_bytes());
        h.update(req.user_prompt.as_bytes());
        Self { state: h.finalize().into(), counter: 0 }
    }

    fn next_unit(&mut self) -> f64 {
        let mut h = Sha256::new();
        h.update(self.state);
        h.update(self.counter.to_le_bytes());
        self.counter += 1;
        let out = h.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&out[..8]);
        (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::request::AgentRole;

    fn worker_req(seq: u64, labor: f64) -> ChatRequest {
        let mut r = ChatRequest::new(AgentRole::Worker, "w0", "persona", "state")
            .with_hint(MockHint::Labor(labor));
        r.sequence = seq;
        r
    }

    #[test]
    fn rational_echo_rounds_to_precision() {
        let p = MockPolicy::default();
        let reply = mock_chat(&worker_req(0, 29.2378), &p);
        assert!(reply.ends_with("{\"LABOR\": 29.24}"), "{reply}");
    }

    #[test]
    fn malformed_every_third() {
        let p = MockPolicy { mode: MockMode::MalformedEveryN { n: 3 }, ..Default::default() };
        let replies: Vec<String> = (0..9).map(|s| mock_chat(&worker_req(s, 10.0), &p)).collect();
        for (i, r) in replies.iter().enumerate() {
            assert_eq!(r == MALFORMED_REPLY, i % 3 == 2, "reply {i}: {r}");
        }
    }

    #[test]
    fn noisy_is_pure_and_seed_dependent() {
        let p = MockPolicy { mode: MockMode::Noisy { jitter: 5.0 }, seed: 11, precision: 4 };
        let a = mock_chat(&worker_req(4, 40.0), &p);
        let b = mock_chat(&worker_req(4, 40.0), &p);
        assert_eq!(a, b);
        let q = MockPolicy { seed: 12, ..p.clone() };
        assert_ne!(a, mock_chat(&worker_req(4, 40.0), &q));
    }

    #[test]
    fn script_cycles_by_sequence() {
        let p = MockPolicy {
            mode: MockMode::Script { replies: vec!["a".into(), "b".into()] },
            ..Default::default()
        };
        assert_eq!(mock_chat(&worker_req(0, 0.0), &p), "a");
        assert_eq!(mock_chat(&worker_req(3, 0.0), &p), "b");
    }

    #[test]
    fn negative_zero_is_normalized() {
        assert_eq!(format_number(-0.001, 2), "0.00");
        assert_eq!(format_number(-1.5, 1), "-1.5");
    }
}
