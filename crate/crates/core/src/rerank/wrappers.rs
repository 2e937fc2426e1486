use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use super::{RelevanceScorer, RerankError};
use crate::corpus::Passage;
use crate::hashing::{sha256_fields, sha256_hex};

/// Memoizes scores by (scorer id, question, passage id, passage content hash).
pub struct CachedScorer {
    inner: Arc<dyn RelevanceScorer>,
    cache: Mutex<HashMap<String, f64>>,
}

impl CachedScorer {
    pub fn new(inner: Arc<dyn RelevanceScorer>) -> Self {
        Self { inner, cache: Mutex::default() }
    }

    fn key(&self, question: &str, p: &Passage) -> String {
        let content = sha256_fields([p.title.as_str(), p.text.as_str()]);
        sha256_hex(format!("{}\u{0}{question}\u{0}{}\u{0}{content}", self.inner.id(), p.id))
    }
}

impl RelevanceScorer for CachedScorer {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn score(&self, question: &str, passages: &[&Passage]) -> Result<Vec<f64>, RerankError> {
        let keys: Vec<String> = passages.iter().map(|p| self.key(question, p)).collect();
        let missing: Vec<&Passage> = {
            let cache = self.cache.lock().unwrap();
            passages
                .iter()
                .zip(&keys)
                .filter(|(_, k)| !cache.contains_key(*k))
                .map(|(p, _)| *p)
                .collect()
        };
        if !missing.is_empty() {
            let fresh = self.inner.score(question, &missing)?;
            let mut cache = self.cache.lock().unwrap();
            for (p, s) in missing.iter().zip(fresh) {
                cache.insert(self.key(question, p), s);
            }
        }
        let cache = self.cache.lock().unwrap();
        Ok(keys.iter().map(|k| cache[k]).collect())
    }
}

/// Pass-through scorer that counts calls and scored passages.
pub struct CountingScorer {
    inner: Arc<dyn RelevanceScorer>,
    calls: AtomicUsize,
    passages: AtomicUsize,
}

impl CountingScorer {
    pub fn new(inner: Arc<dyn RelevanceScorer>) -> Self {
        Self { inner, calls: AtomicUsize::new(0), passages: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn passages_scored(&self) -> usize {
        self.passages.load(Ordering::SeqCst)
    }
}

impl RelevanceScorer for CountingScorer {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn score(&self, question: &str, passages: &[&Passage]) -> Result<Vec<f64>, RerankError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.passages.fetch_add(passages.len(), Ordering::SeqCst);
        self.inner.score(question, passages)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rerank::FallbackScorer;

    fn p(id: &str, text: &str) -> Passage {
        Passage { id: id.into(), article_id: id.into(), title: String::new(), text: text.into(), window_index: 0 }
    }

    #[test]
    fn cache_skips_seen_passages_and_tracks_content() {
        let counter = Arc::new(CountingScorer::new(Arc::new(FallbackScorer)));
        let cached = CachedScorer::new(counter.clone());
        let a = p("a", "war ended");
        let b = p("b", "peace");
        let first = cached.score("war", &[&a, &b]).unwrap();
        assert_eq!(first, vec![1.0, 0.0]);
        assert_eq!(cached.score("war", &[&b, &a]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(counter.passages_scored(), 2);
        // same id, new content: rescored
        let a2 = p("a", "nothing");
        assert_eq!(cached.score("war", &[&a2]).unwrap(), vec![0.0]);
        assert_eq!(counter.passages_scored(), 3);
    }
}
