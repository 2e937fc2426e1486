//! Few-shot question decomposition.
//!
//! Prompt layout, one block per example followed by the target:
//!
//! ```text
//! Question: Would a pear sink in water?
//! 1: What is the density of a pear?
//! 2: What is the density of water?
//! 3: Is #1 greater than #2?
//!
//! Question: {target}
//! 1:
//! ```

use serde::{Deserialize, Serialize};

use crate::corpus::QaInstance;
use crate::providers::{CompletionClient, CompletionRequest, ProviderError};

const EXAMPLES_FIXTURE: &str = include_str!("../data/decomposition_examples.jsonl");

pub const DECOMPOSITION_MAX_TOKENS: usize = 256;
pub const DECOMPOSITION_STOP: [&str; 2] = ["\n\n", "Question:"];

#[derive(Debug, thiserror::Error)]
pub enum DecomposeError {
    #[error("no numbered subquestion lines in completion")]
    Unparseable,
    #[error("decomposition examples: {0}")]
    Examples(String),
    #[error("completion failed: {0}")]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub question: String,
    pub subquestions: Vec<String>,
    pub decomposed: bool,
}

impl Decomposition {
    pub fn identity(question: &str) -> Self {
        Self { question: question.to_string(), subquestions: vec![question.to_string()], decomposed: false }
    }

    /// A single subquestion equal to the question counts as not decomposed.
    fn from_subquestions(question: &str, subquestions: Vec<String>) -> Self {
        if subquestions.len() == 1 && subquestions[0].trim() == question.trim() {
            Self::identity(question)
        } else {
            Self { question: question.to_string(), subquestions, decomposed: true }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompositionExample {
    pub question: String,
    pub subquestions: Vec<String>,
}

impl DecompositionExample {
    pub fn new(question: impl Into<String>, subquestions: &[&str]) -> Self {
        Self { question: question.into(), subquestions: subquestions.iter().map(|s| s.to_string()).collect() }
    }
}

/// The five frozen few-shot examples shipped with the crate.
pub fn default_examples() -> Vec<DecompositionExample> {
    parse_examples(EXAMPLES_FIXTURE).expect("bundled decomposition fixture is valid")
}

/// Examples from question-file lines that carry a `subquestions` field.
pub fn parse_examples(jsonl: &str) -> Result<Vec<DecompositionExample>, DecomposeError> {
    jsonl
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let inst: QaInstance = serde_json::from_str(line)
                .map_err(|e| DecomposeError::Examples(format!("line {}: {e}", i + 1)))?;
            if inst.subquestions.is_empty() {
                return Err(DecomposeError::Examples(format!("line {}: no subquestions", i + 1)));
            }
            Ok(DecompositionExample { question: inst.question, subquestions: inst.subquestions })
        })
        .collect()
}

pub fn build_decomposition_prompt(question: &str, examples: &[DecompositionExample]) -> String {
    let mut prompt = String::new();
    for example in examples {
        prompt.push_str("Question: ");
        prompt.push_str(&example.question);
        prompt.push('\n');
        for (i, sub) in example.subquestions.iter().enumerate() {
            prompt.push_str(&format!("{}: {sub}\n", i + 1));
        }
        prompt.push('\n');
    }
    prompt.push_str("Question: ");
    prompt.push_str(question);
    prompt.push_str("\n1:");
    prompt
}

fn numbered_line(line: &str) -> Option<(u64, &str)> {
    let (number, text) = line.trim().split_once(':')?;
    if number.is_empty() || !number.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    Some((number.parse().ok()?, text))
}

/// Reads `<n>: <text>` lines with strictly increasing `n`, stopping at the
/// first line that does not continue the list.
pub fn parse_subquestions(completion: &str) -> Result<Vec<String>, DecomposeError> {
    let mut out = Vec::new();
    let mut last = 0u64;
    for line in completion.trim().lines() {
        match numbered_line(line) {
            Some((n, text)) if out.is_empty() || n > last => {
                last = n;
                out.push(text.to_string());
            }
            _ => break,
        }
    }
    if out.is_empty() {
        Err(DecomposeError::Unparseable)
    } else {
        Ok(out)
    }
}

/// Decomposes `question` when `enabled`; unparseable model output falls back
/// to the identity decomposition.
pub fn decompose(
    question: &str,
    client: &CompletionClient,
    examples: &[DecompositionExample],
    enabled: bool,
) -> Result<Decomposition, DecomposeError> {
    if !enabled {
        return Ok(Decomposition::identity(question));
    }
    if examples.is_empty() {
        return Err(DecomposeError::Examples("at least one example is required".into()));
    }
    let prompt = build_decomposition_prompt(question, examples);
    let request = CompletionRequest::new(prompt, DECOMPOSITION_MAX_TOKENS).with_stop(&DECOMPOSITION_STOP);
    let completion = client.complete(&request)?;
    // the prompt ends with the "1:" cue, so the model continues that line
    let continued = if numbered_line(completion.trim_start().lines().next().unwrap_or("")).is_some_and(|(n, _)| n == 1) {
        completion
    } else {
        format!("1:{completion}")
    };
    match parse_subquestions(&continued) {
        Ok(subs) => Ok(Decomposition::from_subquestions(question, subs)),
        Err(_) => {
            log::warn!("unparseable decomposition for {question:?}; using the question as is");
            Ok(Decomposition::identity(question))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::sha256_hex;
    use crate::providers::mock::MockCompletionBackend;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn client_answering(prompt: &str, text: &str) -> (Arc<MockCompletionBackend>, CompletionClient) {
        let mock = Arc::new(MockCompletionBackend::canned([(sha256_hex(prompt), text.to_string())]));
        (mock.clone(), CompletionClient::new(mock))
    }

    #[test]
    fn bundled_examples() {
        let examples = default_examples();
        assert_eq!(examples.len(), 5);
        assert!(examples.iter().all(|e| !e.subquestions.is_empty()));
    }

    #[test]
    fn prompt_layout() {
        let ex = [DecompositionExample::new("Would a pear sink?", &["Pear density?", "Water density?"])];
        let prompt = build_decomposition_prompt("Target?", &ex);
        assert_eq!(
            prompt,
            "Question: Would a pear sink?\n1: Pear density?\n2: Water density?\n\nQuestion: Target?\n1:"
        );
        assert_eq!(prompt.matches("Question:").count(), 2);
        assert_eq!(prompt, build_decomposition_prompt("Target?", &ex));
    }

    #[test]
    fn parse_examples_from_figure() {
        let subs = parse_subquestions("1: When did WWI end?\n2: When was Messe named aide-de-camp?").unwrap();
        assert_eq!(subs, ["When did WWI end?", "When was Messe named aide-de-camp?"]);
        assert!(matches!(parse_subquestions("garbage"), Err(DecomposeError::Unparseable)));
        assert_eq!(parse_subquestions("1: A?\nunrelated\n2: B?").unwrap(), ["A?"]);
        assert_eq!(parse_subquestions("1: A?\n1: again\n2: B?").unwrap(), ["A?"]);
        assert_eq!(parse_subquestions("\n  1:  spaced  \n").unwrap(), ["spaced"]);
        assert!(parse_subquestions("1:   \n2: x").is_err());
    }

    #[test]
    fn disabled_is_identity() {
        let (mock, client) = client_answering("unused", "");
        let d = decompose("How long?", &client, &default_examples(), false).unwrap();
        assert_eq!(d, Decomposition::identity("How long?"));
        assert_eq!(mock.calls(), 0);
    }

    #[test]
    fn decomposes_with_mock() {
        let examples = default_examples();
        let q = "How long had the First World War been over when Messe was named aide-de-camp?";
        let prompt = build_decomposition_prompt(q, &examples);
        let (_, client) = client_answering(&prompt, " When did WWI end?\n2: When was Messe named aide-de-camp?");
        let d = decompose(q, &client, &examples, true).unwrap();
        assert!(d.decomposed);
        assert_eq!(d.subquestions, ["When did WWI end?", "When was Messe named aide-de-camp?"]);

        // output that restates the numbering is accepted as well
        let (_, client) = client_answering(&prompt, "1: When did WWI end?");
        assert_eq!(decompose(q, &client, &examples, true).unwrap().subquestions, ["When did WWI end?"]);
    }

    #[test]
    fn unparseable_and_restated_fall_back_to_identity() {
        let examples = default_examples();
        let q = "Is it?";
        let prompt = build_decomposition_prompt(q, &examples);
        let (_, client) = client_answering(&prompt, "\n\nI cannot help");
        assert_eq!(decompose(q, &client, &examples, true).unwrap(), Decomposition::identity(q));
        let (_, client) = client_answering(&prompt, " Is it?");
        assert_eq!(decompose(q, &client, &examples, true).unwrap(), Decomposition::identity(q));
    }

    #[test]
    fn provider_failure_propagates() {
        let mock = Arc::new(MockCompletionBackend::canned([]).failing_when(|_| true));
        let client = CompletionClient::new(mock).with_retry(crate::providers::RetryPolicy::none());
        assert!(matches!(
            decompose("q", &client, &default_examples(), true),
            Err(DecomposeError::Provider(_))
        ));
    }

    proptest! {
        #[test]
        fn never_empty(q in "[A-Za-z ?]{1,30}", completion in "[0-9a-z:\\n ?]{0,60}") {
            let examples = default_examples();
            let prompt = build_decomposition_prompt(&q, &examples);
            let (_, client) = client_answering(&prompt, &completion);
            let d = decompose(&q, &client, &examples, true).unwrap();
            prop_assert!(!d.subquestions.is_empty());
            prop_assert!(d.subquestions.iter().all(|s| !s.is_empty()));
            prop_assert_eq!(!d.decomposed, d.subquestions == vec![q.clone()]);
        }
    }
}
