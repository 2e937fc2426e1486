use serde::Deserialize;

use super::{RelevanceScorer, RerankError, RerankRequest};
use crate::corpus::Passage;
use crate::providers::{HttpEndpoint, Limits, ProviderError, RetryPolicy};

/// Deployment knobs for a remote scoring service.
#[derive(Debug, Clone)]
pub struct RemoteScorerConfig {
    pub endpoint: HttpEndpoint,
    /// Candidates per `/rescore` request.
    pub batch_size: usize,
    /// Passage text cap in characters (about 512 model tokens).
    pub max_chars: usize,
    pub retry: RetryPolicy,
    pub limits: Limits,
    pub model: String,
}

impl RemoteScorerConfig {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        Self {
            endpoint,
            batch_size: 16,
            max_chars: 2048,
            retry: RetryPolicy::default(),
            limits: Limits::unlimited(),
            model: "monot5".into(),
        }
    }
}

/// `POST /rescore` client.
///
/// Request: `{"query": str, "documents": [{"id", "title", "text"}]}`;
/// response: `{"scores": [number, ...]}` aligned with the request order.
pub struct RemoteScorer {
    config: RemoteScorerConfig,
}

#[derive(Deserialize)]
struct RescoreResponse {
    scores: Vec<f64>,
}

impl RemoteScorer {
    pub fn new(config: RemoteScorerConfig) -> Self {
        assert!(config.batch_size > 0, "batch size must be positive");
        Self { config }
    }

    /// Scores a validated request batch by batch, reassembled in input order.
    pub fn remote_score(&self, request: &RerankRequest) -> Result<Vec<f64>, ProviderError> {
        let mut scores = Vec::with_capacity(request.candidates.len());
        for chunk in request.candidates.chunks(self.config.batch_size) {
            let mut documents = chunk.to_vec();
            for doc in &mut documents {
                if doc.text.chars().count() > self.config.max_chars {
                    log::warn!(
                        "truncating candidate `{}` to {} characters for scoring",
                        doc.id,
                        self.config.max_chars
                    );
                    doc.text = doc.text.chars().take(self.config.max_chars).collect();
                }
            }
            let batch = RerankRequest { query: request.query.clone(), candidates: documents };
            let response: RescoreResponse = self.config.retry.run(|_| {
                let _permit = self.config.limits.acquire();
                self.config.endpoint.post_json("rescore", &batch)
            })?;
            if response.scores.len() != chunk.len() {
                return Err(ProviderError::Protocol(format!(
                    "{} scores for {} documents",
                    response.scores.len(),
                    chunk.len()
                )));
            }
            for &s in &response.scores {
                if !s.is_finite() {
                    return Err(ProviderError::Protocol(format!("non-finite score {s}")));
                }
                if s > 0.0 {
                    return Err(ProviderError::Protocol(format!("score {s} is not a log-probability")));
                }
            }
            scores.extend(response.scores);
        }
        Ok(scores)
    }
}

impl RelevanceScorer for RemoteScorer {
    fn id(&self) -> String {
        format!("remote:{}@{}", self.config.model, self.config.endpoint.base_url)
    }

    fn score(&self, question: &str, passages: &[&Passage]) -> Result<Vec<f64>, RerankError> {
        let request = RerankRequest::new(question, passages)?;
        self.remote_score(&request)
            .map_err(|source| RerankError::Scorer { scorer: self.id(), source })
    }
}
