use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{HttpEndpoint, Limits, ProviderError, RetryPolicy};
use crate::hashing::sha256_hex;

/// Fixed-dimension embedding with finite components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ProviderError> {
        if values.is_empty() {
            return Err(ProviderError::Protocol("empty embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProviderError::Protocol("non-finite embedding component".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

/// A text-embedding service.
pub trait EmbeddingBackend: Send + Sync {
    fn name(&self) -> String;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

/// Embedding client with a per-text cache and shape validation.
#[derive(Clone)]
pub struct EmbeddingClient {
    backend: Arc<dyn EmbeddingBackend>,
    cache: Arc<Mutex<HashMap<String, EmbeddingVector>>>,
    retry: RetryPolicy,
    limits: Limits,
}

impl EmbeddingClient {
    pub fn new(backend: Arc<dyn EmbeddingBackend>) -> Self {
        Self {
            backend,
            cache: Arc::default(),
            retry: RetryPolicy::default(),
            limits: Limits::unlimited(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_limits(mut self, limits: Limits) -> Self {
        self.limits = limits;
        self
    }

    pub fn name(&self) -> String {
        self.backend.name()
    }

    /// One vector per input text, in order, all of one dimension.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::Rejected("embed called with no texts".into()));
        }
        let keys: Vec<String> = texts.iter().map(|t| sha256_hex(t)).collect();
        let mut missing: Vec<String> = Vec::new();
        {
            let cache = self.cache.lock().unwrap();
            let mut queued = std::collections::HashSet::new();
            for (text, key) in texts.iter().zip(&keys) {
                if !cache.contains_key(key) && queued.insert(key.clone()) {
                    missing.push(text.clone());
                }
            }
        }
        if !missing.is_empty() {
            let raw = self.retry.run(|_| {
                let _permit = self.limits.acquire();
                self.backend.embed(&missing)
            })?;
            if raw.len() != missing.len() {
                return Err(ProviderError::Protocol(format!(
                    "{} vectors for {} texts",
                    raw.len(),
                    missing.len()
                )));
            }
            let vectors = raw.into_iter().map(EmbeddingVector::new).collect::<Result<Vec<_>, _>>()?;
            let mut cache = self.cache.lock().unwrap();
            let expected = cache.values().next().map(EmbeddingVector::dimension).unwrap_or(vectors[0].dimension());
            if let Some(v) = vectors.iter().find(|v| v.dimension() != expected) {
                return Err(ProviderError::Protocol(format!(
                    "dimension mismatch: {} vs {expected}",
                    v.dimension()
                )));
            }
            for (text, v) in missing.iter().zip(vectors) {
                cache.insert(sha256_hex(text), v);
            }
        }
        let cache = self.cache.lock().unwrap();
        Ok(keys.iter().map(|k| cache[k].clone()).collect())
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        Ok(self.embed(&[text.to_string()])?.remove(0))
    }
}

/// `POST /embed` client.
pub struct HttpEmbeddingBackend {
    endpoint: HttpEndpoint,
    model: String,
}

impl HttpEmbeddingBackend {
    pub fn new(endpoint: HttpEndpoint, model: impl Into<String>) -> Self {
        Self { endpoint, model: model.into() }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingBackend for HttpEmbeddingBackend {
    fn name(&self) -> String {
        format!("http:{}@{}", self.model, self.endpoint.base_url)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let response: EmbedResponse = self.endpoint.post_json("embed", &EmbedRequest { texts })?;
        Ok(response.vectors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::mock::HashEmbedder;

    struct Ragged;
    impl EmbeddingBackend for Ragged {
        fn name(&self) -> String {
            "ragged".into()
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
            Ok(texts.iter().enumerate().map(|(i, _)| vec![1.0; i + 1]).collect())
        }
    }

    #[test]
    fn deterministic_mock_vectors() {
        let client = EmbeddingClient::new(Arc::new(HashEmbedder::new(16)));
        let v = client.embed(&["a".into(), "a".into()]).unwrap();
        assert_eq!(v[0], v[1]);
        let three = client.embed(&["x".into(), "y".into(), "z".into()]).unwrap();
        assert_eq!(three.len(), 3);
        assert!(three.iter().all(|v| v.dimension() == 16));
        assert_ne!(three[0], three[1]);
    }

    #[test]
    fn empty_input_and_ragged_output_rejected() {
        let client = EmbeddingClient::new(Arc::new(HashEmbedder::new(4)));
        assert!(matches!(client.embed(&[]), Err(ProviderError::Rejected(_))));
        let ragged = EmbeddingClient::new(Arc::new(Ragged));
        assert!(matches!(
            ragged.embed(&["a".into(), "b".into()]),
            Err(ProviderError::Protocol(m)) if m.contains("dimension")
        ));
    }
}
