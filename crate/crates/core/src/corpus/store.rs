use std::collections::HashMap;

use super::{CorpusError, Passage};
use crate::hashing::sha256_fields;

/// Read-only passage collection with lookups by passage id and article id.
#[derive(Debug, Clone, Default)]
pub struct PassageStore {
    passages: Vec<Passage>,
    by_id: HashMap<String, usize>,
    by_article: HashMap<String, Vec<usize>>,
}

impl PassageStore {
    pub fn new(passages: Vec<Passage>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(passages.len());
        let mut by_article: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, p) in passages.iter().enumerate() {
            if by_id.insert(p.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId { line: i + 1, id: p.id.clone() });
            }
            by_article.entry(p.article_id.clone()).or_default().push(i);
        }
        for indices in by_article.values_mut() {
            indices.sort_by_key(|&i| passages[i].window_index);
        }
        Ok(Self { passages, by_id, by_article })
    }

    pub fn get(&self, id: &str) -> Option<&Passage> {
        self.by_id.get(id).map(|&i| &self.passages[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn has_article(&self, article_id: &str) -> bool {
        self.by_article.contains_key(article_id)
    }

    /// Passages of one article in window order.
    pub fn passages_of_article(&self, article_id: &str) -> Vec<&Passage> {
        self.by_article
            .get(article_id)
            .map(|ix| ix.iter().map(|&i| &self.passages[i]).collect())
            .unwrap_or_default()
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    /// Content hash over all passages in storage order.
    pub fn content_hash(&self) -> String {
        sha256_fields(self.passages.iter().flat_map(|p| {
            [p.id.as_bytes(), p.article_id.as_bytes(), p.title.as_bytes(), p.text.as_bytes()]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(id: &str, article: &str, w: usize) -> Passage {
        Passage {
            id: id.into(),
            article_id: article.into(),
            title: String::new(),
            text: id.into(),
            window_index: w,
        }
    }

    #[test]
    fn article_lookup_is_window_ordered() {
        let store = PassageStore::new(vec![p("a#1", "a", 1), p("b#0", "b", 0), p("a#0", "a", 0)]).unwrap();
        let ids: Vec<_> = store.passages_of_article("a").iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["a#0", "a#1"]);
        assert!(store.passages_of_article("zzz").is_empty());
        assert!(store.get("b#0").is_some());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = PassageStore::new(vec![p("x", "a", 0), p("x", "a", 1)]).unwrap_err();
        assert!(err.to_string().contains("`x`"));
    }
}
