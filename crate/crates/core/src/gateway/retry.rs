use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Exponential backoff for transient gateway failures.
///
/// Only rate limiting and transport failures are retried. Authentication
/// failures, context overflow and malformed replies surface immediately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(with = "millis")]
    pub initial_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, initial_delay: Duration::from_secs(1), factor: 2.0 }
    }
}

impl RetryPolicy {
    /// No retries at all.
    pub fn none() -> Self {
        Self { max_retries: 0, ..Self::default() }
    }

    /// Same retry count, no sleeping. For tests.
    pub fn immediate(max_retries: u32) -> Self {
        Self { max_retries, initial_delay: Duration::ZERO, factor: 2.0 }
    }

    /// Delay before retry number `attempt + 1`.
    pub fn delay_before_retry(&self, attempt: u32) -> Duration {
        self.initial_delay.mul_f64(self.factor.powi(attempt as i32))
    }

    /// The full backoff schedule.
    pub fn schedule(&self) -> Vec<Duration> {
        (0..self.max_retries).map(|a| self.delay_before_retry(a)).collect()
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Arc;

    use super::*;
    use crate::gateway::{
        AgentKind, BackendProfile, CallTag, ChatBackend, ChatMessage, ChatRequest, ChatResponse, Gateway,
        GatewayError,
    };

    struct Flaky {
        profile: BackendProfile,
        failures: u32,
        error: GatewayError,
        calls: AtomicU32,
    }

    impl Flaky {
        fn new(failures: u32, error: GatewayError) -> Arc<Self> {
            Arc::new(Self {
                profile: BackendProfile::new("flaky", "http://localhost", "m"),
                failures,
                error,
                calls: AtomicU32::new(0),
            })
        }
    }

    impl ChatBackend for Flaky {
        fn profile(&self) -> &BackendProfile {
            &self.profile
        }

        fn send(&self, _: &ChatRequest, _: &CallTag) -> Result<ChatResponse, GatewayError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(self.error.clone())
            } else {
                Ok(ChatResponse {
                    content: "ok".into(),
                    prompt_tokens: 1,
                    completion_tokens: 1,
                    latency_ms: 0,
                    usage_missing: false,
                })
            }
        }
    }

    fn call(backend: Arc<Flaky>, policy: RetryPolicy) -> Result<ChatResponse, GatewayError> {
        let gw = Gateway::new(backend).with_retry(policy);
        let req = gw.request(vec![ChatMessage::user("q")]);
        gw.complete(&req, &CallTag::new(AgentKind::Generator, "q1", 0))
    }

    #[test]
    fn default_schedule_doubles_from_one_second() {
        let p = RetryPolicy::default();
        assert_eq!(p.max_retries, 3);
        assert_eq!(
            p.schedule(),
            vec![Duration::from_secs(1), Duration::from_secs(2), Duration::from_secs(4)]
        );
    }

    #[test]
    fn rate_limit_recovers_within_budget() {
        let b = Flaky::new(3, GatewayError::RateLimited("slow down".into()));
        assert!(call(b.clone(), RetryPolicy::immediate(3)).is_ok());
        assert_eq!(b.calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn rate_limit_gives_up_after_max_retries() {
        let b = Flaky::new(10, GatewayError::RateLimited("slow down".into()));
        let err = call(b.clone(), RetryPolicy::immediate(3)).unwrap_err();
        assert!(matches!(err, GatewayError::RateLimited(_)));
        assert_eq!(b.calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn auth_errors_are_never_retried() {
        let b = Flaky::new(1, GatewayError::Auth { status: 401, message: "bad key".into() });
        let err = call(b.clone(), RetryPolicy::immediate(3)).unwrap_err();
        assert!(matches!(err, GatewayError::Auth { status: 401, .. }));
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn context_overflow_is_not_retried() {
        let b = Flaky::new(1, GatewayError::ContextOverflow("too long".into()));
        assert!(call(b.clone(), RetryPolicy::immediate(3)).is_err());
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);
    }
}
