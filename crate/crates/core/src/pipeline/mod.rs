//! Decompose, retrieve, aggregate: one question or a whole batch.

mod config;
mod record;

use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Passage, PassageStore, QaInstance};
use crate::decompose::{decompose, Decomposition, DecompositionExample};
use crate::hashing::sha256_hex;
use crate::prompting::{
    build_aggregation_prompt, knn_select_indices, parse_aggregation_output, ContextDoc, PromptExample, PromptOptions,
    AGGREGATION_STOP,
};
use crate::providers::{CompletionClient, CompletionRequest, EmbeddingClient};
use crate::rerank::{rerank_refs, RelevanceScorer, ScoredPassage};
use crate::Index;

pub use config::{ConfigError, ContextSource, PromptMode, RunConfig};
pub use record::{AnswerRecord, ContextRef, RecordStatus, Stage, Timings};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{mode}: {message}")]
    Retrieval { mode: ContextSource, message: String },
    #[error("{mode}: no candidates for subquestion `{subquestion}`")]
    EmptyCandidates { mode: ContextSource, subquestion: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Stage(String),
}

/// Counts of calls into the retrieval stack, for auditing a run.
#[derive(Debug, Default)]
pub struct CallCounters {
    pub index_searches: AtomicUsize,
    pub rerank_calls: AtomicUsize,
    pub completions: AtomicUsize,
}

impl CallCounters {
    pub fn snapshot(&self) -> CallCounts {
        CallCounts {
            index_searches: self.index_searches.load(Ordering::SeqCst),
            rerank_calls: self.rerank_calls.load(Ordering::SeqCst),
            completions: self.completions.load(Ordering::SeqCst),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub index_searches: usize,
    pub rerank_calls: usize,
    pub completions: usize,
}

/// The corpus and providers a run draws on. Only what the configuration
/// needs has to be present.
pub struct Services<'a> {
    pub store: &'a PassageStore,
    /// Passages that gold evidence ids may point to outside the main store.
    pub gold_store: Option<&'a PassageStore>,
    pub index: Option<&'a Index>,
    pub scorer: Option<&'a dyn RelevanceScorer>,
    pub completion: &'a CompletionClient,
    pub embedder: Option<&'a EmbeddingClient>,
    /// Static demonstrations, or the pool nearest neighbours are drawn from.
    pub examples: &'a [PromptExample],
    pub decomposition_examples: &'a [DecompositionExample],
    pub counters: CallCounters,
}

impl<'a> Services<'a> {
    pub fn new(store: &'a PassageStore, completion: &'a CompletionClient) -> Self {
        Self {
            store,
            gold_store: None,
            index: None,
            scorer: None,
            completion,
            embedder: None,
            examples: &[],
            decomposition_examples: &[],
            counters: CallCounters::default(),
        }
    }

    /// Checks that every service the configuration relies on is present.
    pub fn check(&self, config: &RunConfig) -> Result<(), ConfigError> {
        config.validate()?;
        if config.context_source.uses_index() && self.index.is_none() {
            return Err(ConfigError(format!("context source {} needs an index", config.context_source)));
        }
        if config.context_source.uses_scorer() && self.scorer.is_none() {
            return Err(ConfigError(format!("context source {} needs a relevance scorer", config.context_source)));
        }
        if config.shots > 0 && self.examples.is_empty() {
            return Err(ConfigError(format!("{} shots requested but the example pool is empty", config.shots)));
        }
        if config.prompt_mode == PromptMode::Dynamic && config.shots > 0 && self.embedder.is_none() {
            return Err(ConfigError("dynamic prompts need an embedding service".into()));
        }
        if config.cot && config.shots > 0 {
            if let Some(ex) = self.examples.iter().find(|e| e.evidence.trim().is_empty()) {
                return Err(ConfigError(format!("chain-of-thought prompts need evidence on every example; `{}` has none", ex.id)));
            }
        }
        if config.decomposition_enabled && self.decomposition_examples.is_empty() {
            return Err(ConfigError("decomposition is enabled but there are no decomposition examples".into()));
        }
        Ok(())
    }

    fn resolve_gold(&self, id: &str) -> Vec<&'a Passage> {
        for store in self.gold_store.into_iter().chain(std::iter::once(self.store)) {
            if let Some(p) = store.get(id) {
                return vec![p];
            }
            if store.has_article(id) {
                return store.passages_of_article(id);
            }
        }
        Vec::new()
    }
}

/// Interleaves ranked lists (every list's first item in list order, then
/// every second item, ...) and drops repeated passage ids.
pub fn merge_by_rank(lists: Vec<Vec<ScoredPassage>>) -> Vec<ScoredPassage> {
    let depth = lists.iter().map(Vec::len).max().unwrap_or(0);
    let mut seen = HashSet::new();
    let mut iters: Vec<_> = lists.into_iter().map(Vec::into_iter).collect();
    let mut merged = Vec::new();
    for _ in 0..depth {
        for it in &mut iters {
            if let Some(sp) = it.next() {
                if seen.insert(sp.passage.id.clone()) {
                    merged.push(sp);
                }
            }
        }
    }
    merged
}

fn rerank_candidates(
    subquestion: &str,
    candidates: &[&Passage],
    config: &RunConfig,
    services: &Services<'_>,
) -> Result<Vec<ScoredPassage>, PipelineError> {
    let mode = config.context_source;
    if candidates.is_empty() {
        return Err(PipelineError::EmptyCandidates { mode, subquestion: subquestion.to_string() });
    }
    let scorer = services.scorer.ok_or_else(|| PipelineError::Retrieval { mode, message: "no relevance scorer".into() })?;
    services.counters.rerank_calls.fetch_add(1, Ordering::SeqCst);
    rerank_refs(subquestion, candidates, scorer, config.contexts_per_question)
        .map_err(|e| PipelineError::Retrieval { mode, message: e.to_string() })
}

/// Context passages for a decomposed question under the configured mode.
pub fn retrieve_contexts(
    decomposition: &Decomposition,
    config: &RunConfig,
    services: &Services<'_>,
    instance: &QaInstance,
) -> Result<Vec<ScoredPassage>, PipelineError> {
    let mode = config.context_source;
    match mode {
        ContextSource::Gold => {
            let evidence = instance
                .primary_evidence()
                .ok_or_else(|| PipelineError::Retrieval { mode, message: format!("{} has no gold evidence", instance.question_id) })?;
            let mut seen = HashSet::new();
            let mut out = Vec::new();
            for id in evidence {
                let passages = services.resolve_gold(id);
                if passages.is_empty() {
                    return Err(PipelineError::Retrieval { mode, message: format!("gold evidence `{id}` not found") });
                }
                for p in passages {
                    if seen.insert(p.id.as_str()) {
                        out.push(ScoredPassage { passage: p.clone(), relevance: 0.0, rank: out.len() + 1 });
                    }
                }
            }
            Ok(out)
        }
        ContextSource::FullRetrieval | ContextSource::LinkedIntersection => {
            let index = services.index.ok_or_else(|| PipelineError::Retrieval { mode, message: "no index".into() })?;
            let linked: HashSet<&str> = instance.linked_article_ids.iter().map(String::as_str).collect();
            let mut lists = Vec::with_capacity(decomposition.subquestions.len());
            for sub in &decomposition.subquestions {
                services.counters.index_searches.fetch_add(1, Ordering::SeqCst);
                let hits = if mode == ContextSource::LinkedIntersection {
                    index.search_filtered(sub, config.bm25_depth, |id| {
                        services.store.get(id).is_some_and(|p| linked.contains(p.article_id.as_str()))
                    })
                } else {
                    index.search(sub, config.bm25_depth)
                };
                let candidates = hits
                    .iter()
                    .map(|h| {
                        services.store.get(&h.passage_id).ok_or_else(|| PipelineError::Retrieval {
                            mode,
                            message: format!("indexed passage `{}` missing from the corpus", h.passage_id),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                lists.push(rerank_candidates(sub, &candidates, config, services)?);
            }
            Ok(merge_by_rank(lists))
        }
        ContextSource::RerankOnly => {
            let article = instance.grounding_article_id.as_deref().ok_or_else(|| PipelineError::Retrieval {
                mode,
                message: format!("{} has no grounding article", instance.question_id),
            })?;
            let candidates = services.store.passages_of_article(article);
            let mut lists = Vec::with_capacity(decomposition.subquestions.len());
            for sub in &decomposition.subquestions {
                lists.push(rerank_candidates(sub, &candidates, config, services)?);
            }
            Ok(merge_by_rank(lists))
        }
    }
}

fn fail(mut record: AnswerRecord, stage: Stage, message: impl ToString) -> AnswerRecord {
    record.status = RecordStatus::Failed { stage, message: message.to_string() };
    record
}

/// Runs the full flow for one question. Stage failures are recorded in the
/// returned record rather than returned as errors.
pub fn answer_question(instance: &QaInstance, config: &RunConfig, services: &Services<'_>) -> AnswerRecord {
    let mut record = AnswerRecord::new(&instance.question_id, &instance.question, config.context_source);

    let started = Instant::now();
    let decomposition = match decompose(
        &instance.question,
        services.completion,
        services.decomposition_examples,
        config.decomposition_enabled,
    ) {
        Ok(d) => d,
        Err(e) => return fail(record, Stage::Decompose, e),
    };
    if config.decomposition_enabled {
        services.counters.completions.fetch_add(1, Ordering::SeqCst);
    }
    record.timings.decompose = started.elapsed();
    record.subquestions = decomposition.subquestions.clone();
    record.decomposed = decomposition.decomposed;

    let started = Instant::now();
    let contexts = match retrieve_contexts(&decomposition, config, services, instance) {
        Ok(c) => c,
        Err(e) => return fail(record, Stage::Retrieve, e),
    };
    record.timings.retrieve = started.elapsed();
    record.contexts_used = contexts
        .iter()
        .map(|c| ContextRef { id: c.passage.id.clone(), article_id: c.passage.article_id.clone(), score: c.relevance })
        .collect();

    let started = Instant::now();
    let shots = config.shots.min(services.examples.len());
    let example_indices: Vec<usize> = match config.prompt_mode {
        _ if shots == 0 => Vec::new(),
        PromptMode::Static => (0..shots).collect(),
        PromptMode::Dynamic => {
            let Some(embedder) = services.embedder else {
                return fail(record, Stage::SelectExamples, "no embedding service");
            };
            match knn_select_indices(&instance.question, services.examples, shots, embedder) {
                Ok(ix) => ix,
                Err(e) => return fail(record, Stage::SelectExamples, e),
            }
        }
    };
    let examples: Vec<PromptExample> = example_indices.iter().map(|&i| services.examples[i].clone()).collect();
    let docs: Vec<ContextDoc> = contexts.iter().map(|c| ContextDoc::new(c.passage.title.clone(), c.passage.text.clone())).collect();
    let options = PromptOptions {
        budget: config.budget,
        passage_cap_tokens: config.passage_cap_tokens,
        ..PromptOptions::default()
    };
    let built = match build_aggregation_prompt(&examples, &docs, &instance.question, config.cot, &options) {
        Ok(b) => b,
        Err(e) => return fail(record, Stage::BuildPrompt, e),
    };
    record.timings.prompt = started.elapsed();
    record.prompt_contexts = built.contexts_used;
    record.examples = built.examples_used.iter().map(|&i| examples[i].id.clone()).collect();
    record.prompt_hash = sha256_hex(&built.text);

    let started = Instant::now();
    let request = CompletionRequest::new(built.text, config.budget.reserved_output).with_stop(AGGREGATION_STOP);
    services.counters.completions.fetch_add(1, Ordering::SeqCst);
    let completion = match services.completion.complete(&request) {
        Ok(c) => c,
        Err(e) => return fail(record, Stage::Complete, e),
    };
    record.timings.complete = started.elapsed();
    record.completion = completion;

    match parse_aggregation_output(&record.completion, config.cot) {
        Ok((evidence, answer)) => {
            record.evidence = evidence;
            record.answer = answer;
        }
        Err(e) => record.status = RecordStatus::ParseFailed { message: e.to_string() },
    }
    record
}

/// Provenance of a batch run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub config: RunConfig,
    pub corpus_hash: String,
    pub providers: BTreeMap<String, String>,
    pub instances: usize,
    pub ok: usize,
    pub parse_failed: usize,
    pub failed: usize,
    pub calls: CallCounts,
}

impl RunManifest {
    pub fn failures(&self) -> usize {
        self.parse_failed + self.failed
    }
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub records: Vec<AnswerRecord>,
    pub manifest: RunManifest,
}

impl BatchOutput {
    /// Records as JSON Lines, without timings.
    pub fn records_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

/// Answers every instance with at most `config.parallelism` in flight.
/// Records come back in input order.
pub fn run_batch(instances: &[QaInstance], config: &RunConfig, services: &Services<'_>) -> Result<BatchOutput, PipelineError> {
    services.check(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| PipelineError::Stage(format!("thread pool: {e}")))?;
    let records: Vec<AnswerRecord> = pool.install(|| {
        instances
            .par_iter()
            .map(|inst| {
                let record = answer_question(inst, config, services);
                match &record.status {
                    RecordStatus::Ok => log::info!("{}: ok", inst.question_id),
                    RecordStatus::ParseFailed { message } => log::warn!("{}: parse failed: {message}", inst.question_id),
                    RecordStatus::Failed { stage, message } => log::warn!("{}: {stage} failed: {message}", inst.question_id),
                }
                record
            })
            .collect()
    });

    let mut providers = BTreeMap::new();
    providers.insert("completion".to_string(), services.completion.name());
    if let Some(s) = services.scorer {
        providers.insert("scorer".to_string(), s.id());
    }
    if let Some(e) = services.embedder {
        providers.insert("embedding".to_string(), e.name());
    }
    let count = |f: fn(&RecordStatus) -> bool| records.iter().filter(|r| f(&r.status)).count();
    let manifest = RunManifest {
        config_hash: config.hash(),
        config: config.clone(),
        corpus_hash: services.store.content_hash(),
        providers,
        instances: records.len(),
        ok: count(RecordStatus::is_ok),
        parse_failed: count(|s| matches!(s, RecordStatus::ParseFailed { .. })),
        failed: count(RecordStatus::is_failed),
        calls: services.counters.snapshot(),
    };
    Ok(BatchOutput { records, manifest })
}
