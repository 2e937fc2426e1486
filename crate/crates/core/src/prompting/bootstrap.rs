use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::aggregate::render_context_block;
use super::{ContextDoc, PromptExample};
use crate::corpus::{write_jsonl, CorpusError, PassageStore, QaInstance};
use crate::providers::{CompletionClient, CompletionRequest, EmbeddingClient, ProviderError};

pub const BOOTSTRAP_HEADER: &str = include_str!("../../templates/bootstrap_header.v1.txt");
const BOOTSTRAP_MAX_TOKENS: usize = 256;

/// A training question paired with its resolved gold contexts.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingItem {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub contexts: Vec<ContextDoc>,
}

/// Resolves each instance's first gold evidence set against the store.
/// Evidence ids may name passages or whole articles. Instances whose
/// evidence cannot be resolved are returned separately by id.
pub fn training_items(instances: &[QaInstance], store: &PassageStore) -> (Vec<TrainingItem>, Vec<String>) {
    let mut items = Vec::new();
    let mut unresolved = Vec::new();
    for inst in instances {
        let Some(evidence) = inst.primary_evidence() else {
            unresolved.push(inst.question_id.clone());
            continue;
        };
        let mut contexts = Vec::new();
        let mut ok = true;
        for id in evidence {
            if let Some(p) = store.get(id) {
                contexts.push(ContextDoc::new(p.title.clone(), p.text.clone()));
            } else if store.has_article(id) {
                contexts.extend(store.passages_of_article(id).into_iter().map(|p| ContextDoc::new(p.title.clone(), p.text.clone())));
            } else {
                ok = false;
                break;
            }
        }
        match (ok, inst.gold_answers.first()) {
            (true, Some(answer)) if !contexts.is_empty() => items.push(TrainingItem {
                id: inst.question_id.clone(),
                question: inst.question.clone(),
                answer: answer.clone(),
                contexts,
            }),
            _ => unresolved.push(inst.question_id.clone()),
        }
    }
    (items, unresolved)
}

/// The prompt asking the model to justify a known answer.
pub fn bootstrap_prompt(item: &TrainingItem) -> String {
    format!(
        "{}\n\n{}\n\nQuestion: {}\n\nAnswer: {}\n\nEvidence:",
        BOOTSTRAP_HEADER.trim_end(),
        render_context_block(&item.contexts),
        item.question.trim(),
        item.answer.trim()
    )
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BootstrapOutcome {
    pub pool: Vec<PromptExample>,
    pub sampled: usize,
    /// `(item id, reason)` for every sampled item that produced no example.
    pub skipped: Vec<(String, String)>,
}

#[derive(Debug, thiserror::Error)]
pub enum BootstrapError {
    #[error("sample fraction must be in [0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("aborted after {} examples: {source}", partial.pool.len())]
    Aborted { partial: BootstrapOutcome, source: ProviderError },
    #[error("writing example pool: {0}")]
    Persist(#[from] CorpusError),
}

fn sample_indices(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let count = ((fraction * n as f64).round() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, count).into_vec();
    picked.sort_unstable();
    picked
}

/// Builds an example pool by asking the model to write evidence paragraphs
/// for a seeded random sample of training items.
///
/// Items whose completion fails or comes back empty are skipped and counted.
/// An authentication failure aborts the run; whatever was built so far is
/// still written to `persist` and returned inside the error.
pub fn bootstrap_example_pool(
    items: &[TrainingItem],
    client: &CompletionClient,
    embedder: Option<&EmbeddingClient>,
    fraction: f64,
    seed: u64,
    persist: Option<&Path>,
) -> Result<BootstrapOutcome, BootstrapError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(BootstrapError::InvalidFraction(fraction));
    }
    let picked = sample_indices(items.len(), fraction, seed);
    let mut outcome = BootstrapOutcome { sampled: picked.len(), ..BootstrapOutcome::default() };
    for &i in &picked {
        let item = &items[i];
        match bootstrap_one(item, client, embedder) {
            Ok(example) => outcome.pool.push(example),
            Err(e) if e.is_fatal() => {
                if let Some(path) = persist {
                    write_jsonl(path, &outcome.pool)?;
                }
                return Err(BootstrapError::Aborted { partial: outcome, source: e });
            }
            Err(e) => {
                log::warn!("skipping training item {}: {e}", item.id);
                outcome.skipped.push((item.id.clone(), e.to_string()));
            }
        }
    }
    if let Some(path) = persist {
        write_jsonl(path, &outcome.pool)?;
    }
    Ok(outcome)
}

fn bootstrap_one(
    item: &TrainingItem,
    client: &CompletionClient,
    embedder: Option<&EmbeddingClient>,
) -> Result<PromptExample, ProviderError> {
    let request = CompletionRequest::new(bootstrap_prompt(item), BOOTSTRAP_MAX_TOKENS).with_stop(&["\n\nQuestion:", "\n\nExample"]);
    let text = client.complete(&request)?;
    let evidence = text.rsplit_once("Answer:").map_or(text.as_str(), |(e, _)| e).trim();
    let evidence = evidence.strip_prefix("Evidence:").unwrap_or(evidence).trim();
    if evidence.is_empty() {
        return Err(ProviderError::Protocol("empty evidence".into()));
    }
    let embedding = embedder.map(|e| e.embed_one(&item.question)).transpose()?;
    Ok(PromptExample {
        id: item.id.clone(),
        contexts: item.contexts.clone(),
        question: item.question.clone(),
        evidence: evidence.to_string(),
        answer: item.answer.clone(),
        embedding,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::providers::mock::{HashEmbedder, MockCompletionBackend};
    use crate::providers::RetryPolicy;

    fn items(n: usize) -> Vec<TrainingItem> {
        (0..n)
            .map(|i| TrainingItem {
                id: format!("q{i}"),
                question: format!("Where is thing {i}?"),
                answer: format!("Place {i}"),
                contexts: vec![ContextDoc::new(format!("Place {i}"), format!("Thing {i} is in place {i}."))],
            })
            .collect()
    }

    #[test]
    fn sampling_is_seeded_and_sized() {
        assert_eq!(sample_indices(100, 0.1, 7).len(), 10);
        assert_eq!(sample_indices(100, 0.1, 7), sample_indices(100, 0.1, 7));
        assert_ne!(sample_indices(100, 0.5, 7), sample_indices(100, 0.5, 8));
        assert_eq!(sample_indices(3, 1.0, 0), vec![0, 1, 2]);
        assert!(sample_indices(0, 0.5, 0).is_empty());
    }

    #[test]
    fn builds_pool_with_embeddings() {
        let client = CompletionClient::new(Arc::new(MockCompletionBackend::heuristic()));
        let embedder = EmbeddingClient::new(Arc::new(HashEmbedder::new(4)));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        let out = bootstrap_example_pool(&items(10), &client, Some(&embedder), 0.5, 3, Some(&path)).unwrap();
        assert_eq!(out.sampled, 5);
        assert_eq!(out.pool.len(), 5);
        assert!(out.pool.iter().all(|e| e.embedding.is_some() && e.evidence.contains("[Document 1]")));
        let reloaded = super::super::load_example_pool(&path).unwrap();
        assert_eq!(reloaded, out.pool);
    }

    #[test]
    fn transient_failures_skip_and_auth_aborts() {
        let flaky = MockCompletionBackend::heuristic().failing_when(|p| p.contains("thing 1?"));
        let client = CompletionClient::new(Arc::new(flaky)).with_retry(RetryPolicy::none());
        let out = bootstrap_example_pool(&items(3), &client, None, 1.0, 0, None).unwrap();
        assert_eq!(out.pool.len(), 2);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].0, "q1");

        struct Denied;
        impl crate::providers::CompletionBackend for Denied {
            fn name(&self) -> String {
                "denied".into()
            }
            fn complete(&self, _: &CompletionRequest) -> Result<String, ProviderError> {
                Err(ProviderError::Auth("bad key".into()))
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("partial.jsonl");
        let client = CompletionClient::new(Arc::new(Denied));
        match bootstrap_example_pool(&items(3), &client, None, 1.0, 0, Some(&path)) {
            Err(BootstrapError::Aborted { partial, .. }) => assert!(partial.pool.is_empty()),
            other => panic!("expected abort, got {other:?}"),
        }
        assert!(path.exists());
        assert!(bootstrap_example_pool(&items(3), &client, None, 1.5, 0, None).is_err());
    }
}
