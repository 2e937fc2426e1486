use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ContextSource;

/// A passage that made it into the merged context list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRef {
    pub id: String,
    pub article_id: String,
    pub score: f64,
}

/// Pipeline stage names used to tag failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Decompose,
    Retrieve,
    SelectExamples,
    BuildPrompt,
    Complete,
    Parse,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Decompose => "decompose",
            Stage::Retrieve => "retrieve",
            Stage::SelectExamples => "select_examples",
            Stage::BuildPrompt => "build_prompt",
            Stage::Complete => "complete",
            Stage::Parse => "parse",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    ParseFailed { message: String },
    Failed { stage: Stage, message: String },
}

impl RecordStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RecordStatus::Ok)
    }

    pub fn is_failed(&self) -> bool {
        matches!(self, RecordStatus::Failed { .. })
    }
}

/// Wall-clock time spent per stage. Kept out of the serialized record so that
/// repeated runs produce identical record files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub decompose: Duration,
    pub retrieve: Duration,
    pub prompt: Duration,
    pub complete: Duration,
}

/// Everything the pipeline did for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub question_id: String,
    pub question: String,
    pub context_source: ContextSource,
    pub subquestions: Vec<String>,
    pub decomposed: bool,
    /// Merged contexts, best first.
    pub contexts_used: Vec<ContextRef>,
    /// How many leading entries of `contexts_used` fit into the prompt.
    #[serde(default)]
    pub prompt_contexts: usize,
    /// Ids of the few-shot examples, in prompt order.
    #[serde(default)]
    pub examples: Vec<String>,
    #[serde(default)]
    pub prompt_hash: String,
    #[serde(default)]
    pub completion: String,
    #[serde(default)]
    pub evidence: String,
    #[serde(default)]
    pub answer: String,
    #[serde(flatten)]
    pub status: RecordStatus,
    #[serde(skip)]
    pub timings: Timings,
}

impl AnswerRecord {
    pub(crate) fn new(question_id: &str, question: &str, context_source: ContextSource) -> Self {
        Self {
            question_id: question_id.to_string(),
            question: question.to_string(),
            context_source,
            subquestions: Vec::new(),
            decomposed: false,
            contexts_used: Vec::new(),
            prompt_contexts: 0,
            examples: Vec::new(),
            prompt_hash: String::new(),
            completion: String::new(),
            evidence: String::new(),
            answer: String::new(),
            status: RecordStatus::Ok,
            timings: Timings::default(),
        }
    }

    /// Ids of the contexts that were shown to the model.
    pub fn prompt_context_ids(&self) -> impl Iterator<Item = &str> {
        self.contexts_used.iter().take(self.prompt_contexts).map(|c| c.id.as_str())
    }
}
