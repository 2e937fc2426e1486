//! Clients for the external model services: text completion and text
//! embedding. Both sit behind small backend traits so the pipeline can run
//! against HTTP endpoints or deterministic in-process mocks.
//!
//! Wire protocols (JSON over HTTP POST, UTF-8):
//!
//! * `POST /complete` `{"prompt", "max_tokens", "temperature", "stop"}` → `{"text"}`
//! * `POST /embed` `{"texts": [...]}` → `{"vectors": [[...], ...]}`

mod cache;
mod completion;
mod embedding;
pub(crate) mod http;
mod limits;
pub mod mock;

use std::time::Duration;

pub use cache::ResponseCache;
pub use completion::{
    CompletionBackend, CompletionClient, CompletionRequest, HttpCompletionBackend, MAX_STOP_SEQUENCES,
};
pub use embedding::{EmbeddingBackend, EmbeddingClient, EmbeddingVector, HttpEmbeddingBackend};
pub use http::HttpEndpoint;
pub use limits::{Limits, Permit};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("request rejected before sending: {0}")]
    Rejected(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("response cache: {0}")]
    Cache(String),
}

impl ProviderError {
    /// Worth another attempt under the retry policy.
    pub fn is_retriable(&self) -> bool {
        matches!(self, ProviderError::Transport(_))
    }

    /// Errors that will fail every subsequent request too.
    pub fn is_fatal(&self) -> bool {
        matches!(self, ProviderError::Auth(_))
    }
}

/// Exponential backoff for retriable (transport) failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: Duration::from_secs(1),
            multiplier: 2.0,
            max_backoff: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Single attempt, no sleeping.
    pub fn none() -> Self {
        Self { max_attempts: 1, ..Self::default() }
    }

    pub fn with_backoff(mut self, initial: Duration) -> Self {
        self.initial_backoff = initial;
        self
    }

    /// Delay before attempt `attempt + 1` (attempts are 1-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = self.multiplier.powi(attempt.saturating_sub(1) as i32);
        self.initial_backoff.mul_f64(factor).min(self.max_backoff)
    }

    pub fn run<T>(&self, mut call: impl FnMut(u32) -> Result<T, ProviderError>) -> Result<T, ProviderError> {
        let attempts = self.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match call(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retriable() && attempt < attempts => {
                    let delay = self.backoff(attempt);
                    log::warn!("attempt {attempt}/{attempts} failed ({e}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(e) if e.is_retriable() => {
                    return Err(ProviderError::RetriesExhausted { attempts, last: e.to_string() })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy::default();
        assert_eq!(p.backoff(1), Duration::from_secs(1));
        assert_eq!(p.backoff(2), Duration::from_secs(2));
        assert_eq!(p.backoff(3), Duration::from_secs(4));
        assert_eq!(p.backoff(10), Duration::from_secs(30));
    }

    #[test]
    fn retries_transport_errors_only() {
        let policy = RetryPolicy::default().with_backoff(Duration::from_millis(1));
        let calls = Cell::new(0);
        let out = policy.run(|_| {
            calls.set(calls.get() + 1);
            if calls.get() < 3 {
                Err(ProviderError::Transport("reset".into()))
            } else {
                Ok(7)
            }
        });
        assert_eq!(out, Ok(7));
        assert_eq!(calls.get(), 3);

        calls.set(0);
        let out: Result<(), _> = policy.run(|_| {
            calls.set(calls.get() + 1);
            Err(ProviderError::Transport("down".into()))
        });
        assert!(matches!(out, Err(ProviderError::RetriesExhausted { attempts: 3, .. })));
        assert_eq!(calls.get(), 3);

        calls.set(0);
        let out: Result<(), _> = policy.run(|_| {
            calls.set(calls.get() + 1);
            Err(ProviderError::Protocol("bad".into()))
        });
        assert!(matches!(out, Err(ProviderError::Protocol(_))));
        assert_eq!(calls.get(), 1);
    }
}
