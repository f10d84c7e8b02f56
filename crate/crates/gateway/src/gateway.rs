use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};

use tracing::{debug, warn};

use crate::config::{Backend, GatewayConfig};
use crate::error::GatewayError;
use crate::http::HttpBackend;
use crate::request::ChatRequest;
use crate::transcript::{Transcript, TranscriptEntry};
use crate::ChatBackend;

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub content: String,
    pub retries: u32,
}

/// Counting semaphore bounding concurrent backend calls.
struct Admission {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Admission);

impl Admission {
    fn new(n: usize) -> Self {
        Self { available: Mutex::new(n), freed: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().expect("admission lock poisoned");
        while *n == 0 {
            n = self.freed.wait(n).expect("admission lock poisoned");
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.available.lock().expect("admission lock poisoned");
        *n += 1;
        self.0.freed.notify_one();
    }
}

pub struct Gateway {
    cfg: GatewayConfig,
    backend: Box<dyn ChatBackend>,
    admission: Admission,
    sequence: AtomicU64,
    transcript: Mutex<Transcript>,
}

impl Gateway {
    pub fn new(cfg: GatewayConfig) -> Result<Self, GatewayError> {
        cfg.validate().map_err(GatewayError::InvalidRequest)?;
        let backend: Box<dyn ChatBackend> = match cfg.backend {
            Backend::Mock => Box::new(cfg.mock.clone()),
            Backend::Http => Box::new(HttpBackend::new(&cfg)),
        };
        Ok(Self::with_backend(cfg, backend))
    }

    pub fn with_backend(cfg: GatewayConfig, backend: Box<dyn ChatBackend>) -> Self {
        let slots = cfg.max_in_flight.max(1);
        Self {
            cfg,
            backend,
            admission: Admission::new(slots),
            sequence: AtomicU64::new(0),
            transcript: Mutex::new(Transcript::default()),
        }
    }

    pub fn mock(policy: crate::MockPolicy) -> Self {
        let cfg = GatewayConfig { mock: policy, ..Default::default() };
        Self::new(cfg).expect("default gateway config is valid")
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    pub fn is_mock(&self) -> bool {
        self.backend.is_mock()
    }

    /// Send one request, retrying transient failures with exponential backoff.
    ///
    /// Fills in model, temperature and max_tokens from the config when the
    /// request leaves them at their defaults, and stamps the sequence number.
    pub fn chat(&self, mut req: ChatRequest) -> Result<ChatReply, GatewayError> {
        if req.model.is_empty() {
            req.model = self.cfg.model.clone();
        }
        req.temperature = self.cfg.temperature;
        req.max_tokens = self.cfg.max_tokens;
        req.sequence = self.sequence.fetch_add(1, Ordering::SeqCst);
        if let Err(e) = req.validate() {
            self.record(&req, Err(e.to_string()), 0);
            return Err(e);
        }

        let mut retries = 0;
        loop {
            let outcome = {
                let _permit = self.admission.acquire();
                self.backend.send(&req)
            };
            match outcome {
                Ok(content) => {
                    if retries > 0 {
                        debug!(request_id = %req.request_id, retries, "request succeeded after retry");
                    }
                    self.record(&req, Ok(&content), retries);
                    return Ok(ChatReply { content, retries });
                }
                Err(e) if e.is_retryable() && retries < self.cfg.max_retries => {
                    let delay = self.cfg.backoff_delay(retries);
                    warn!(request_id = %req.request_id, error = %e, retry = retries + 1,
                          delay_secs = delay.as_secs_f64(), "retrying chat request");
                    std::thread::sleep(delay);
                    retries += 1;
                }
                Err(e) => {
                    let err = if e.is_retryable() {
                        GatewayError::ExhaustedRetries { attempts: retries + 1, last: e.to_string() }
                    } else {
                        e
                    };
                    self.record(&req, Err(err.to_string()), retries);
                    return Err(err);
                }
            }
        }
    }

    fn record(&self, req: &ChatRequest, outcome: Result<&str, String>, retries: u32) {
        let entry = TranscriptEntry::new(req, outcome, retries);
        self.transcript.lock().expect("transcript lock poisoned").push(entry);
    }

    pub fn transcript(&self) -> Transcript {
        self.transcript.lock().expect("transcript lock poisoned").clone()
    }

    pub fn requests_sent(&self) -> u64 {
        self.sequence.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::request::{AgentRole, MockHint};
    use crate::{MockMode, MockPolicy};
    use std::sync::atomic::AtomicUsize;
    use std::sync::Arc;

    struct Flaky {
        failures_left: AtomicUsize,
    }

    impl ChatBackend for Flaky {
        fn send(&self, _req: &ChatRequest) -> Result<String, GatewayError> {
            if self.failures_left.load(Ordering::SeqCst) > 0 {
                self.failures_left.fetch_sub(1, Ordering::SeqCst);
                Err(GatewayError::Transient("HTTP 500".into()))
            } else {
                Ok("ok".into())
            }
        }
    }

    fn fast_cfg(max_retries: u32) -> GatewayConfig {
        GatewayConfig { backoff_base_secs: 0.0, max_retries, ..Default::default() }
    }

    fn req() -> ChatRequest {
        ChatRequest::new(AgentRole::Worker, "w0", "sys", "user").with_hint(MockHint::Labor(1.0))
    }

    #[test]
    fn retries_then_succeeds() {
        let gw = Gateway::with_backend(
            fast_cfg(3),
            Box::new(Flaky { failures_left: AtomicUsize::new(2) }),
        );
        let r = gw.chat(req()).unwrap();
        assert_eq!(r, ChatReply { content: "ok".into(), retries: 2 });
        assert_eq!(gw.transcript().entries()[0].retries, 2);
    }

    #[test]
    fn exhausts_retries() {
        let gw = Gateway::with_backend(
            fast_cfg(1),
            Box::new(Flaky { failures_left: AtomicUsize::new(5) }),
        );
        match gw.chat(req()) {
            Err(GatewayError::ExhaustedRetries { attempts, .. }) => assert_eq!(attempts, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sequence_numbers_are_stamped_in_order() {
        let gw = Gateway::mock(MockPolicy { mode: MockMode::MalformedEveryN { n: 2 }, ..Default::default() });
        let replies: Vec<String> = (0..4).map(|_| gw.chat(req()).unwrap().content).collect();
        assert_eq!(replies[1], crate::MALFORMED_REPLY);
        assert_eq!(replies[3], crate::MALFORMED_REPLY);
        let seqs: Vec<u64> = gw.transcript().entries().iter().map(|e| e.sequence).collect();
        assert_eq!(seqs, vec![0, 1, 2, 3]);
    }

    #[test]
    fn empty_prompt_rejected_without_sending() {
        let calls = Arc::new(AtomicUsize::new(0));
        struct Counting(Arc<AtomicUsize>);
        impl ChatBackend for Counting {
            fn send(&self, _r: &ChatRequest) -> Result<String, GatewayError> {
                self.0.fetch_add(1, Ordering::SeqCst);
                Ok(String::new())
            }
        }
        let gw = Gateway::with_backend(fast_cfg(0), Box::new(Counting(calls.clone())));
        let bad = ChatRequest::new(AgentRole::Planner, "p", " ", "user");
        assert!(matches!(gw.chat(bad), Err(GatewayError::InvalidRequest(_))));
        assert_eq!(calls.load(Ordering::SeqCst), 0);
    }
}
