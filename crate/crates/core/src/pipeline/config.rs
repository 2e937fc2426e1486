use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::index::Bm25Params;
use crate::prompting::TokenBudget;

/// Where a question's context passages come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextSource {
    /// Annotated evidence passages; no retrieval.
    Gold,
    /// Retrieval restricted to the question's linked articles.
    LinkedIntersection,
    /// Retrieval over the whole corpus.
    FullRetrieval,
    /// Rerank every passage of the grounding article; no first stage.
    RerankOnly,
}

impl ContextSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ContextSource::Gold => "gold",
            ContextSource::LinkedIntersection => "linked_intersection",
            ContextSource::FullRetrieval => "full_retrieval",
            ContextSource::RerankOnly => "rerank_only",
        }
    }

    pub fn uses_index(self) -> bool {
        matches!(self, ContextSource::LinkedIntersection | ContextSource::FullRetrieval)
    }

    pub fn uses_scorer(self) -> bool {
        self != ContextSource::Gold
    }
}

impl std::fmt::Display for ContextSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContextSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gold" => Ok(Self::Gold),
            "linked_intersection" => Ok(Self::LinkedIntersection),
            "full_retrieval" => Ok(Self::FullRetrieval),
            "rerank_only" => Ok(Self::RerankOnly),
            other => Err(format!(
                "unknown context source `{other}` (expected gold, linked_intersection, full_retrieval or rerank_only)"
            )),
        }
    }
}

/// Fixed demonstrations or per-question nearest neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Static,
    Dynamic,
}

impl FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(Self::Static),
            "dynamic" => Ok(Self::Dynamic),
            other => Err(format!("unknown prompt mode `{other}` (expected static or dynamic)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid run configuration: {0}")]
pub struct ConfigError(pub String);

/// One experiment setting. Every field has a default, so a config file only
/// needs the fields it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub decomposition_enabled: bool,
    pub context_source: ContextSource,
    pub cot: bool,
    /// First-stage candidates per subquestion.
    pub bm25_depth: usize,
    /// Reranked passages kept per subquestion.
    pub contexts_per_question: usize,
    pub shots: usize,
    pub prompt_mode: PromptMode,
    pub budget: TokenBudget,
    pub bm25: Bm25Params<f64>,
    /// Per-passage token cap applied when a prompt overflows the budget.
    pub passage_cap_tokens: usize,
    /// Questions processed concurrently.
    pub parallelism: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            decomposition_enabled: true,
            context_source: ContextSource::FullRetrieval,
            cot: true,
            bm25_depth: 1000,
            contexts_per_question: 5,
            shots: 4,
            prompt_mode: PromptMode::Static,
            budget: TokenBudget::default(),
            bm25: Bm25Params::default(),
            passage_cap_tokens: 300,
            parallelism: 4,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.bm25_depth == 0 {
            return Err(ConfigError("bm25_depth must be positive".into()));
        }
        if self.contexts_per_question == 0 {
            return Err(ConfigError("contexts_per_question must be positive".into()));
        }
        if self.passage_cap_tokens == 0 {
            return Err(ConfigError("passage_cap_tokens must be positive".into()));
        }
        if self.parallelism == 0 {
            return Err(ConfigError("parallelism must be positive".into()));
        }
        self.budget.validate().map_err(|e| ConfigError(e.to_string()))?;
        Bm25Params::new(self.bm25.k1, self.bm25.b).map_err(|e| ConfigError(e.to_string()))?;
        Ok(())
    }

    /// Parses and validates a JSON config.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        crate::hashing::sha256_hex(serde_json::to_string(self).expect("config serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let c = RunConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.bm25_depth, 1000);
        assert_eq!(c.contexts_per_question, 5);
        let bad = RunConfig { contexts_per_question: 0, ..RunConfig::default() };
        assert!(bad.validate().is_err());
        let bad = RunConfig { bm25: Bm25Params { k1: 0.9, b: 2.0 }, ..RunConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c = RunConfig::from_json(r#"{"context_source":"gold","cot":false}"#).unwrap();
        assert_eq!(c.context_source, ContextSource::Gold);
        assert!(!c.cot);
        assert_eq!(c.shots, 4);
        assert!(RunConfig::from_json(r#"{"context_source":"bogus"}"#).is_err());
        assert!(RunConfig::from_json(r#"{"typo_field":1}"#).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig { cot: false, ..RunConfig::default() };
        assert_eq!(a.hash(), RunConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!("rerank_only".parse::<ContextSource>().unwrap(), ContextSource::RerankOnly);
    }
}
