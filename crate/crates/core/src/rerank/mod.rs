//! Second retrieval stage: rescoring BM25 candidates with a relevance
//! scorer.
//!
//! The neural scorer is remote ([`RemoteScorer`]); its score for a passage
//! is the log-probability of the token `true` given
//! `"Query: {question} Document: {title}. {text} Relevant:"`.
//! [`FallbackScorer`] is a deterministic token-overlap stand-in for offline
//! runs and tests.

mod remote;
mod wrappers;

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Passage;
use crate::index::tokenize;
use crate::providers::ProviderError;

pub use remote::{RemoteScorer, RemoteScorerConfig};
pub use wrappers::{CachedScorer, CountingScorer};

#[derive(Debug, thiserror::Error)]
pub enum RerankError {
    #[error("invalid rerank input: {0}")]
    InvalidInput(String),
    #[error("scorer `{scorer}` failed: {source}")]
    Scorer {
        scorer: String,
        #[source]
        source: ProviderError,
    },
}

/// A passage with its relevance score and 1-based rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub passage: Passage,
    pub relevance: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankCandidate {
    pub id: String,
    pub title: String,
    pub text: String,
}

/// Query plus candidate documents, as sent to a scoring service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankRequest {
    pub query: String,
    #[serde(rename = "documents")]
    pub candidates: Vec<RerankCandidate>,
}

impl RerankRequest {
    pub fn new(query: impl Into<String>, passages: &[&Passage]) -> Result<Self, RerankError> {
        if passages.is_empty() {
            return Err(RerankError::InvalidInput("no candidates".into()));
        }
        let mut seen = HashSet::new();
        let mut candidates = Vec::with_capacity(passages.len());
        for p in passages {
            if !seen.insert(p.id.as_str()) {
                return Err(RerankError::InvalidInput(format!("duplicate candidate id `{}`", p.id)));
            }
            candidates.push(RerankCandidate { id: p.id.clone(), title: p.title.clone(), text: p.text.clone() });
        }
        Ok(Self { query: query.into(), candidates })
    }
}

/// Input text for a sequence-to-sequence relevance model.
pub fn scorer_input(question: &str, title: &str, text: &str) -> String {
    format!("Query: {question} Document: {title}. {text} Relevant:")
}

/// Scores passages for a question; one score per passage, in input order.
pub trait RelevanceScorer: Send + Sync {
    fn id(&self) -> String;
    fn score(&self, question: &str, passages: &[&Passage]) -> Result<Vec<f64>, RerankError>;
}

/// Fraction of the question's distinct tokens that also occur in the
/// passage title or text; 0 for a question without tokens.
pub fn fallback_score(question: &str, passage: &Passage) -> f64 {
    let question: HashSet<String> = tokenize(question).into_iter().collect();
    if question.is_empty() {
        return 0.0;
    }
    let passage: HashSet<String> = tokenize(&passage.title).into_iter().chain(tokenize(&passage.text)).collect();
    question.intersection(&passage).count() as f64 / question.len() as f64
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FallbackScorer;

impl RelevanceScorer for FallbackScorer {
    fn id(&self) -> String {
        "fallback-token-overlap".into()
    }

    fn score(&self, question: &str, passages: &[&Passage]) -> Result<Vec<f64>, RerankError> {
        Ok(passages.iter().map(|p| fallback_score(question, p)).collect())
    }
}

/// Orders by descending relevance, then ascending passage id.
pub(crate) fn relevance_order(a: &ScoredPassage, b: &ScoredPassage) -> Ordering {
    b.relevance
        .partial_cmp(&a.relevance)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.passage.id.cmp(&b.passage.id))
}

/// Scores every candidate once and returns the best `min(top_k, n)`.
pub fn rerank(
    question: &str,
    candidates: &[Passage],
    scorer: &dyn RelevanceScorer,
    top_k: usize,
) -> Result<Vec<ScoredPassage>, RerankError> {
    let refs: Vec<&Passage> = candidates.iter().collect();
    rerank_refs(question, &refs, scorer, top_k)
}

pub fn rerank_refs(
    question: &str,
    candidates: &[&Passage],
    scorer: &dyn RelevanceScorer,
    top_k: usize,
) -> Result<Vec<ScoredPassage>, RerankError> {
    if top_k == 0 {
        return Err(RerankError::InvalidInput("top_k must be at least 1".into()));
    }
    // validates non-empty and unique ids
    RerankRequest::new(question, candidates)?;
    let scores = scorer.score(question, candidates)?;
    if scores.len() != candidates.len() {
        return Err(RerankError::Scorer {
            scorer: scorer.id(),
            source: ProviderError::Protocol(format!("{} scores for {} candidates", scores.len(), candidates.len())),
        });
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(RerankError::Scorer {
            scorer: scorer.id(),
            source: ProviderError::Protocol(format!("non-finite score {bad}")),
        });
    }
    let mut scored: Vec<ScoredPassage> = candidates
        .iter()
        .zip(scores)
        .map(|(p, relevance)| ScoredPassage { passage: (*p).clone(), relevance, rank: 0 })
        .collect();
    scored.sort_by(relevance_order);
    scored.truncate(top_k);
    for (i, s) in scored.iter_mut().enumerate() {
        s.rank = i + 1;
    }
    Ok(scored)
}
