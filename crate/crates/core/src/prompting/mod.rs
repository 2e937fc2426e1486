//! Few-shot example selection, aggregation prompt assembly under a token
//! budget, and completion parsing.

mod aggregate;
mod bootstrap;
pub mod knn;

use serde::{Deserialize, Serialize};

use crate::providers::{EmbeddingVector, ProviderError};

pub use aggregate::{
    build_aggregation_prompt, parse_aggregation_output, render_context_block, BuiltPrompt, PromptOptions,
    AGGREGATION_MAX_TOKENS, AGGREGATION_STOP, HEADER_COT, HEADER_PLAIN,
};
pub use bootstrap::{
    bootstrap_example_pool, bootstrap_prompt, training_items, BootstrapError, BootstrapOutcome, TrainingItem,
    BOOTSTRAP_HEADER,
};
pub use knn::{knn_select, knn_select_indices};

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("no contexts to prompt with")]
    NoContexts,
    #[error("example pool is empty")]
    EmptyPool,
    #[error("example {index}: {message}")]
    InvalidExample { index: usize, message: String },
    #[error("prompt needs ~{needed} tokens even with one context and no examples; budget is {available}")]
    BudgetUnsatisfiable { needed: usize, available: usize },
    #[error("invalid token budget: {0}")]
    InvalidBudget(String),
    #[error("completion has no `Answer:` marker")]
    MissingAnswer,
    #[error("completion has an empty answer")]
    EmptyAnswer,
    #[error("embedding failed: {0}")]
    Embedding(#[from] ProviderError),
    #[error("example pool file: {0}")]
    PoolFile(String),
}

/// Title and body of one context document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextDoc {
    pub title: String,
    #[serde(rename = "contents")]
    pub text: String,
}

impl ContextDoc {
    pub fn new(title: impl Into<String>, text: impl Into<String>) -> Self {
        Self { title: title.into(), text: text.into() }
    }
}

/// A worked demonstration: contexts, question, evidence paragraph, answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptExample {
    #[serde(default)]
    pub id: String,
    pub contexts: Vec<ContextDoc>,
    pub question: String,
    #[serde(default)]
    pub evidence: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector>,
}

/// Loads an example pool (JSON Lines of [`PromptExample`]).
pub fn load_example_pool(path: &std::path::Path) -> Result<Vec<PromptExample>, PromptError> {
    let text = std::fs::read_to_string(path).map_err(|e| PromptError::PoolFile(format!("{}: {e}", path.display())))?;
    parse_example_pool(&text)
}

pub fn parse_example_pool(jsonl: &str) -> Result<Vec<PromptExample>, PromptError> {
    jsonl
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let ex: PromptExample =
                serde_json::from_str(line).map_err(|e| PromptError::PoolFile(format!("line {}: {e}", i + 1)))?;
            if ex.answer.trim().is_empty() {
                return Err(PromptError::InvalidExample { index: i, message: "empty answer".into() });
            }
            Ok(ex)
        })
        .collect()
}

/// Estimates the model token count of a text.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// `ceil(characters / 4)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharEstimate;

impl TokenCounter for CharEstimate {
    fn count(&self, text: &str) -> usize {
        text.chars().count().div_ceil(4)
    }
}

/// Model context window and the part of it reserved for the completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenBudget {
    pub model_limit: usize,
    pub reserved_output: usize,
}

impl Default for TokenBudget {
    fn default() -> Self {
        Self { model_limit: 4000, reserved_output: AGGREGATION_MAX_TOKENS }
    }
}

impl TokenBudget {
    pub fn new(model_limit: usize, reserved_output: usize) -> Result<Self, PromptError> {
        let b = Self { model_limit, reserved_output };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.reserved_output == 0 || self.reserved_output >= self.model_limit {
            return Err(PromptError::InvalidBudget(format!(
                "reserved_output {} must be positive and below model_limit {}",
                self.reserved_output, self.model_limit
            )));
        }
        Ok(())
    }

    /// Tokens available to the prompt.
    pub fn prompt_tokens(&self) -> usize {
        self.model_limit - self.reserved_output
    }
}
