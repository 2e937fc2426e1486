//! Deterministic in-process stand-ins for the model services.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{CompletionBackend, CompletionRequest, EmbeddingBackend, ProviderError};
use crate::corpus::{JsonlReader, CorpusError};
use crate::hashing::sha256_hex;
use crate::index::tokenize;

type FailPredicate = Box<dyn Fn(&str) -> bool + Send + Sync>;

/// Completion mock: canned responses keyed by prompt SHA-256, with an
/// optional deterministic [`heuristic_completion`] for everything else.
pub struct MockCompletionBackend {
    canned: HashMap<String, String>,
    heuristic: bool,
    fail_if: Option<FailPredicate>,
    calls: AtomicUsize,
}

impl MockCompletionBackend {
    /// Only canned prompts are answered; others get a protocol error.
    pub fn canned(entries: impl IntoIterator<Item = (String, String)>) -> Self {
        Self { canned: entries.into_iter().collect(), heuristic: false, fail_if: None, calls: AtomicUsize::new(0) }
    }

    /// Answers every prompt with [`heuristic_completion`].
    pub fn heuristic() -> Self {
        Self { heuristic: true, ..Self::canned([]) }
    }

    /// Canned entries from a JSON Lines file with fields `text` and either
    /// `prompt_sha256` or `prompt`. Unknown prompts fall back to the heuristic.
    pub fn from_canned_file(path: &Path) -> Result<Self, CorpusError> {
        let mut canned = HashMap::new();
        for record in JsonlReader::open(path)? {
            let record = record?;
            let text = record.required_str("text")?;
            let key = match record.optional_str("prompt_sha256")? {
                Some(hash) => hash,
                None => sha256_hex(record.required_str("prompt")?),
            };
            canned.insert(key, text);
        }
        Ok(Self { canned, heuristic: true, fail_if: None, calls: AtomicUsize::new(0) })
    }

    /// Fails with a transport error whenever `predicate(prompt)` holds.
    pub fn failing_when(mut self, predicate: impl Fn(&str) -> bool + Send + Sync + 'static) -> Self {
        self.fail_if = Some(Box::new(predicate));
        self
    }

    /// Backend invocations so far (cache hits never reach the backend).
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionBackend for MockCompletionBackend {
    fn name(&self) -> String {
        "mock-completion".into()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.fail_if.as_ref().is_some_and(|f| f(&request.prompt)) {
            return Err(ProviderError::Transport("mock failure".into()));
        }
        if let Some(text) = self.canned.get(&sha256_hex(&request.prompt)) {
            return Ok(text.clone());
        }
        if self.heuristic {
            return Ok(heuristic_completion(&request.prompt));
        }
        Err(ProviderError::Protocol("no canned response for prompt".into()))
    }
}

/// Prompt-shape-aware deterministic completion.
///
/// * decomposition prompts (ending in `1:`): splits the target question on
///   its first " and ", otherwise repeats it;
/// * aggregation prompts (ending in `Evidence:` or `Answer:`): cites the
///   target document with the largest token overlap with the question and
///   answers with its title, or `unanswerable` when nothing overlaps.
pub fn heuristic_completion(prompt: &str) -> String {
    let trimmed = prompt.trim_end();
    let block = trimmed.rsplit_once("\nExample ").map_or(trimmed, |(_, b)| b);
    let question = block
        .lines()
        .filter_map(|l| l.strip_prefix("Question: "))
        .last()
        .unwrap_or("")
        .trim();
    if trimmed.ends_with("\n1:") || trimmed == "1:" {
        return match question.split_once(" and ") {
            Some((left, right)) => {
                let left = left.trim_end_matches('?');
                let right = right.trim_end_matches('?');
                format!(" {left}?\n2: {right}?")
            }
            None => format!(" {question}"),
        };
    }

    let query: HashSet<String> = tokenize(question).into_iter().collect();
    let mut best: Option<(usize, usize, &str, &str)> = None;
    for entry in block.split("\n\n") {
        let Some(rest) = entry.strip_prefix("[Document ") else { continue };
        let Some((number, rest)) = rest.split_once("]: Title: ") else { continue };
        let Some((title, content)) = rest.split_once(". Content: ") else { continue };
        let Ok(number) = number.parse::<usize>() else { continue };
        let overlap = tokenize(content)
            .into_iter()
            .chain(tokenize(title))
            .collect::<HashSet<_>>()
            .intersection(&query)
            .count();
        if overlap > 0 && best.map_or(true, |b| overlap > b.0) {
            best = Some((overlap, number, title, content));
        }
    }
    let (evidence, answer) = match best {
        Some((_, number, title, content)) => {
            let first = crate::corpus::split_sentences(content).into_iter().next().unwrap_or_default();
            (format!("According to [Document {number}], {first}"), title.to_string())
        }
        None => ("None of the documents address the question.".to_string(), "unanswerable".to_string()),
    };
    if trimmed.ends_with("Evidence:") {
        format!(" {evidence}\n\nAnswer: {answer}")
    } else {
        format!(" {answer}")
    }
}

/// Hash-seeded pseudorandom unit vectors: equal texts map to equal vectors.
pub struct HashEmbedder {
    dimension: usize,
    calls: AtomicUsize,
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let seed: [u8; 32] = Sha256::digest(text.as_bytes()).into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        let raw: Vec<f64> = (0..self.dimension).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            let mut unit = vec![0.0; self.dimension];
            unit[0] = 1.0;
            return unit;
        }
        raw.into_iter().map(|x| x / norm).collect()
    }
}

impl EmbeddingBackend for HashEmbedder {
    fn name(&self) -> String {
        format!("mock-hash-embedder/{}", self.dimension)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Embedder backed by an explicit text → vector table.
pub struct FixedEmbedder {
    table: HashMap<String, Vec<f64>>,
}

impl FixedEmbedder {
    pub fn new(entries: impl IntoIterator<Item = (String, Vec<f64>)>) -> Self {
        Self { table: entries.into_iter().collect() }
    }
}

impl EmbeddingBackend for FixedEmbedder {
    fn name(&self) -> String {
        "mock-fixed-embedder".into()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        texts
            .iter()
            .map(|t| {
                self.table
                    .get(t)
                    .cloned()
                    .ok_or_else(|| ProviderError::Protocol(format!("no fixed embedding for `{t}`")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heuristic_decomposition() {
        let p = "Question: Was X born before Y?\n1: When was X born?\n\nQuestion: Who won and when did it end?\n1:";
        assert_eq!(heuristic_completion(p), " Who won?\n2: when did it end?");
        let p = "Question: Who won?\n1:";
        assert_eq!(heuristic_completion(p), " Who won?");
    }

    #[test]
    fn heuristic_aggregation_cites_best_document() {
        let p = "Example 1:\n\n[Document 1]: Title: Peace. Content: Nothing here.\n\n\
                 [Document 2]: Title: World War I. Content: The war ended in 1918. More text.\n\n\
                 Question: When did the war end?\n\nEvidence:";
        assert_eq!(
            heuristic_completion(p),
            " According to [Document 2], The war ended in 1918.\n\nAnswer: World War I"
        );
        let p = "Example 1:\n\n[Document 1]: Title: A. Content: b.\n\nQuestion: zzz?\n\nAnswer:";
        assert_eq!(heuristic_completion(p), " unanswerable");
    }

    #[test]
    fn hash_embedder_unit_norm() {
        let e = HashEmbedder::new(8);
        let v = e.vector("hello");
        assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(v, e.vector("hello"));
    }
}
