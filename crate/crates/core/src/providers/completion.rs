use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{HttpEndpoint, Limits, ProviderError, ResponseCache, RetryPolicy};
use crate::hashing::sha256_fields;
use crate::prompting::{CharEstimate, TokenCounter};

pub const MAX_STOP_SEQUENCES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: usize,
    pub temperature: f64,
    #[serde(rename = "stop")]
    pub stop_sequences: Vec<String>,
}

impl CompletionRequest {
    /// Greedy request with no stop sequences.
    pub fn new(prompt: impl Into<String>, max_tokens: usize) -> Self {
        Self { prompt: prompt.into(), max_tokens, temperature: 0.0, stop_sequences: Vec::new() }
    }

    pub fn with_stop(mut self, stop: &[&str]) -> Self {
        self.stop_sequences = stop.iter().map(|s| s.to_string()).collect();
        self
    }

    fn validate(&self) -> Result<(), ProviderError> {
        if self.prompt.is_empty() {
            return Err(ProviderError::Rejected("empty prompt".into()));
        }
        if self.max_tokens == 0 {
            return Err(ProviderError::Rejected("max_tokens must be positive".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ProviderError::Rejected(format!("invalid temperature {}", self.temperature)));
        }
        if self.stop_sequences.len() > MAX_STOP_SEQUENCES {
            return Err(ProviderError::Rejected(format!(
                "{} stop sequences (at most {MAX_STOP_SEQUENCES})",
                self.stop_sequences.len()
            )));
        }
        Ok(())
    }

    /// Cuts `text` at the earliest stop sequence.
    pub fn apply_stop(&self, text: &str) -> String {
        let cut = self
            .stop_sequences
            .iter()
            .filter(|s| !s.is_empty())
            .filter_map(|s| text.find(s.as_str()))
            .min()
            .unwrap_or(text.len());
        text[..cut].to_string()
    }
}

/// A text-completion service.
pub trait CompletionBackend: Send + Sync {
    /// Stable identity, part of every cache key.
    fn name(&self) -> String;
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;
}

/// Completion client: budget check, response cache, rate limits and retries
/// around a [`CompletionBackend`].
#[derive(Clone)]
pub struct CompletionClient {
    backend: Arc<dyn CompletionBackend>,
    cache: Arc<ResponseCache>,
    retry: RetryPolicy,
    limits: Limits,
    model_limit: usize,
    counter: Arc<dyn TokenCounter>,
}

impl CompletionClient {
    pub fn new(backend: Arc<dyn CompletionBackend>) -> Self {
        Self {
            backend,
            cache: Arc::new(ResponseCache::in_memory()),
            retry: RetryPolicy::default(),
            limits: Limits::unlimited(),
            model_limit: 4000,
            counter: Arc::new(CharEstimate),
        }
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_limits(mut self, limits: Limits) -> Self {
        self.limits = limits;
        self
    }

    pub fn with_model_limit(mut self, tokens: usize) -> Self {
        self.model_limit = tokens;
        self
    }

    pub fn with_token_counter(mut self, counter: Arc<dyn TokenCounter>) -> Self {
        self.counter = counter;
        self
    }

    pub fn name(&self) -> String {
        self.backend.name()
    }

    pub fn model_limit(&self) -> usize {
        self.model_limit
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn cache_key(&self, request: &CompletionRequest) -> String {
        let body = serde_json::to_string(request).expect("request serializes");
        sha256_fields([self.backend.name(), body])
    }

    /// Generated text with any stop sequence removed. Identical requests are
    /// answered from the cache without contacting the backend.
    pub fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        request.validate()?;
        let prompt_tokens = self.counter.count(&request.prompt);
        if prompt_tokens + request.max_tokens > self.model_limit {
            return Err(ProviderError::Rejected(format!(
                "prompt ~{prompt_tokens} tokens + max_tokens {} exceeds model limit {}",
                request.max_tokens, self.model_limit
            )));
        }
        let key = self.cache_key(request);
        if let Some(text) = self.cache.get(&key) {
            return Ok(text);
        }
        let raw = self.retry.run(|_| {
            let _permit = self.limits.acquire();
            self.backend.complete(request)
        })?;
        let text = request.apply_stop(&raw);
        let record = serde_json::json!({ "backend": self.backend.name(), "request": request });
        self.cache.put(&key, record, &text)?;
        Ok(text)
    }
}

/// `POST /complete` client.
pub struct HttpCompletionBackend {
    endpoint: HttpEndpoint,
    model: String,
}

impl HttpCompletionBackend {
    pub fn new(endpoint: HttpEndpoint, model: impl Into<String>) -> Self {
        Self { endpoint, model: model.into() }
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

impl CompletionBackend for HttpCompletionBackend {
    fn name(&self) -> String {
        format!("http:{}@{}", self.model, self.endpoint.base_url)
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let response: CompletionResponse = self.endpoint.post_json("complete", request)?;
        Ok(response.text)
    }
}
