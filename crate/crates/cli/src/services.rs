use std::sync::Arc;

use anyhow::{Context, Result};

use mdqa::providers::mock::{HashEmbedder, MockCompletionBackend};
use mdqa::providers::{
    CompletionClient, EmbeddingClient, HttpCompletionBackend, HttpEmbeddingBackend, HttpEndpoint, Limits, ResponseCache,
};
use mdqa::rerank::{CachedScorer, CountingScorer, FallbackScorer, RelevanceScorer, RemoteScorer, RemoteScorerConfig};

use crate::config::ProviderSettings;
use crate::ProviderArgs;

const DEFAULT_API_KEY_ENV: &str = "MDQA_API_KEY";
const DEFAULT_COMPLETION_MODEL: &str = "text-davinci-002";
const MOCK_EMBEDDING_DIMENSION: usize = 32;

/// The model services a command may use; absent ones were not configured.
pub struct Providers {
    pub completion: Option<CompletionClient>,
    pub scorer: Option<Arc<CountingScorer>>,
    pub embedder: Option<EmbeddingClient>,
}

impl Providers {
    pub fn completion(&self) -> Result<&CompletionClient> {
        self.completion
            .as_ref()
            .context("no completion service configured (use --completion-url, a [providers] table, or --mock-providers)")
    }

    pub fn scorer(&self) -> Option<&dyn RelevanceScorer> {
        self.scorer.as_deref().map(|s| s as &dyn RelevanceScorer)
    }
}

pub fn build(args: &ProviderArgs, file: &ProviderSettings, model_limit: usize) -> Result<Providers> {
    let limits = || Limits::new(args.max_in_flight.max(1), args.requests_per_minute);
    let cache = match &args.cache_dir {
        Some(dir) => ResponseCache::on_disk(dir).with_context(|| format!("opening cache {}", dir.display()))?,
        None => ResponseCache::in_memory(),
    };

    if args.mock_providers {
        let backend = match &args.mock_responses {
            Some(path) => MockCompletionBackend::from_canned_file(path)
                .with_context(|| format!("reading canned responses {}", path.display()))?,
            None => MockCompletionBackend::heuristic(),
        };
        let completion =
            CompletionClient::new(Arc::new(backend)).with_cache(Arc::new(cache)).with_model_limit(model_limit);
        let scorer = CountingScorer::new(Arc::new(CachedScorer::new(Arc::new(FallbackScorer))));
        let embedder = EmbeddingClient::new(Arc::new(HashEmbedder::new(MOCK_EMBEDDING_DIMENSION)));
        return Ok(Providers { completion: Some(completion), scorer: Some(Arc::new(scorer)), embedder: Some(embedder) });
    }

    let key_env = args.api_key_env.clone().or_else(|| file.api_key_env.clone()).unwrap_or_else(|| DEFAULT_API_KEY_ENV.into());
    let endpoint = |url: &str| HttpEndpoint::new(url).with_api_key_env(key_env.clone());

    let completion = args.completion_url.as_deref().or(file.completion_url.as_deref()).map(|url| {
        let model = args
            .completion_model
            .clone()
            .or_else(|| file.completion_model.clone())
            .unwrap_or_else(|| DEFAULT_COMPLETION_MODEL.into());
        CompletionClient::new(Arc::new(HttpCompletionBackend::new(endpoint(url), model)))
            .with_cache(Arc::new(cache))
            .with_limits(limits())
            .with_model_limit(model_limit)
    });
    let scorer = args.rescore_url.as_deref().or(file.rescore_url.as_deref()).map(|url| {
        let config = RemoteScorerConfig { limits: limits(), ..RemoteScorerConfig::new(endpoint(url)) };
        Arc::new(CountingScorer::new(Arc::new(CachedScorer::new(Arc::new(RemoteScorer::new(config))))))
    });
    let embedder = args
        .embed_url
        .as_deref()
        .or(file.embed_url.as_deref())
        .map(|url| EmbeddingClient::new(Arc::new(HttpEmbeddingBackend::new(endpoint(url), "sentence-encoder"))).with_limits(limits()));
    Ok(Providers { completion, scorer, embedder })
}
