//! Tokenization, inverted-index construction and BM25 candidate retrieval.

mod snapshot;

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use crate::corpus::Passage;
use crate::Scalar;

pub use snapshot::{SNAPSHOT_FORMAT, SNAPSHOT_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("duplicate passage id `{0}`")]
    DuplicateId(String),
    #[error("unknown passage id `{0}`")]
    UnknownPassage(String),
    #[error("invalid BM25 parameters: {0}")]
    InvalidParams(String),
    #[error("index snapshot line {line}: {message}")]
    Snapshot { line: usize, message: String },
    #[error("index snapshot {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Lowercases and splits on every maximal run of non-alphanumeric characters.
/// Digits are kept; there is no stemming and no stopword list.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut terms = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            terms.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        terms.push(current);
    }
    terms
}

/// Distinct terms in first-occurrence order.
pub fn unique_terms<T: AsRef<str>>(terms: &[T]) -> Vec<&str> {
    let mut seen = HashSet::new();
    terms
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| seen.insert(*t))
        .collect()
}

/// Term-frequency saturation `k1` and length normalization `b`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Bm25Params<S> {
    pub k1: S,
    pub b: S,
}

impl<S: Scalar> Bm25Params<S> {
    pub fn new(k1: S, b: S) -> Result<Self, IndexError> {
        if !(k1 >= S::zero()) || !k1.is_finite() {
            return Err(IndexError::InvalidParams(format!("k1 must be finite and >= 0, got {k1}")));
        }
        if !(b >= S::zero() && b <= S::one()) {
            return Err(IndexError::InvalidParams(format!("b must lie in [0, 1], got {b}")));
        }
        Ok(Self { k1, b })
    }
}

impl<S: Scalar> Default for Bm25Params<S> {
    fn default() -> Self {
        Self { k1: S::lit(0.9), b: S::lit(0.4) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

/// Ranked retrieval result. Ranks start at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit<S> {
    pub passage_id: String,
    pub score: S,
    pub rank: usize,
}

/// Immutable inverted index with the statistics BM25 needs.
#[derive(Debug, Clone)]
pub struct InvertedIndex<S> {
    params: Bm25Params<S>,
    ids: Vec<String>,
    lookup: HashMap<String, u32>,
    doc_lengths: Vec<u32>,
    postings: HashMap<String, Vec<Posting>>,
    avgdl: S,
}

impl<S: Scalar> InvertedIndex<S> {
    pub fn build(passages: &[Passage], params: Bm25Params<S>) -> Result<Self, IndexError> {
        let mut ids = Vec::with_capacity(passages.len());
        let mut lookup = HashMap::with_capacity(passages.len());
        let mut doc_lengths = Vec::with_capacity(passages.len());
        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        for (doc, passage) in passages.iter().enumerate() {
            let doc = doc as u32;
            if lookup.insert(passage.id.clone(), doc).is_some() {
                return Err(IndexError::DuplicateId(passage.id.clone()));
            }
            ids.push(passage.id.clone());
            let terms = tokenize(&passage.text);
            doc_lengths.push(terms.len() as u32);
            let mut counts: HashMap<String, u32> = HashMap::new();
            for term in terms {
                *counts.entry(term).or_default() += 1;
            }
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting { doc, tf });
            }
        }
        Ok(Self::from_parts(params, ids, lookup, doc_lengths, postings))
    }

    fn from_parts(
        params: Bm25Params<S>,
        ids: Vec<String>,
        lookup: HashMap<String, u32>,
        doc_lengths: Vec<u32>,
        postings: HashMap<String, Vec<Posting>>,
    ) -> Self {
        let avgdl = if doc_lengths.is_empty() {
            S::zero()
        } else {
            let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
            S::from_u64(total).expect("token total representable") / S::from_count(doc_lengths.len())
        };
        Self { params, ids, lookup, doc_lengths, postings, avgdl }
    }

    pub fn params(&self) -> Bm25Params<S> {
        self.params
    }

    pub fn num_docs(&self) -> usize {
        self.ids.len()
    }

    pub fn avgdl(&self) -> S {
        self.avgdl
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn doc_length(&self, passage_id: &str) -> Option<u32> {
        self.lookup.get(passage_id).map(|&d| self.doc_lengths[d as usize])
    }

    pub fn passage_id(&self, doc: u32) -> &str {
        &self.ids[doc as usize]
    }

    pub fn passage_ids(&self) -> &[String] {
        &self.ids
    }

    fn idf(&self, df: usize) -> S {
        let n = S::from_count(self.num_docs());
        let df = S::from_count(df);
        let half = S::lit(0.5);
        (S::one() + (n - df + half) / (df + half)).ln()
    }

    fn tf_part(&self, tf: u32, doc_len: u32) -> S {
        let Bm25Params { k1, b } = self.params;
        let tf = S::from_u32(tf).expect("tf representable");
        let dl = S::from_u32(doc_len).expect("length representable");
        tf * (k1 + S::one()) / (tf + k1 * (S::one() - b + b * dl / self.avgdl))
    }

    /// BM25 score of one passage over the distinct `query_terms`.
    pub fn bm25_score<T: AsRef<str>>(&self, query_terms: &[T], passage_id: &str) -> Result<S, IndexError> {
        let doc = *self
            .lookup
            .get(passage_id)
            .ok_or_else(|| IndexError::UnknownPassage(passage_id.to_string()))?;
        let mut score = S::zero();
        for term in unique_terms(query_terms) {
            let postings = self.postings(term);
            if let Ok(pos) = postings.binary_search_by_key(&doc, |p| p.doc) {
                score += self.idf(postings.len()) * self.tf_part(postings[pos].tf, self.doc_lengths[doc as usize]);
            }
        }
        Ok(score)
    }

    /// Top `k` passages sharing at least one term with `query`.
    pub fn search(&self, query: &str, k: usize) -> Vec<SearchHit<S>> {
        self.search_filtered(query, k, |_| true)
    }

    /// Like [`search`](Self::search), restricted to passages accepted by
    /// `allow`. Corpus statistics stay global.
    pub fn search_filtered<F>(&self, query: &str, k: usize, allow: F) -> Vec<SearchHit<S>>
    where
        F: Fn(&str) -> bool,
    {
        if k == 0 {
            return Vec::new();
        }
        let terms = tokenize(query);
        let mut scores: HashMap<u32, S> = HashMap::new();
        for term in unique_terms(&terms) {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(postings.len());
            for p in postings {
                *scores.entry(p.doc).or_insert_with(S::zero) +=
                    idf * self.tf_part(p.tf, self.doc_lengths[p.doc as usize]);
            }
        }
        let mut ranked: Vec<(u32, S)> = scores
            .into_iter()
            .filter(|&(doc, _)| allow(self.passage_id(doc)))
            .collect();
        let order = |a: &(u32, S), b: &(u32, S)| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.ids[a.0 as usize].cmp(&self.ids[b.0 as usize]))
        };
        if ranked.len() > k {
            ranked.select_nth_unstable_by(k - 1, order);
            ranked.truncate(k);
        }
        ranked.sort_unstable_by(order);
        ranked
            .into_iter()
            .enumerate()
            .map(|(i, (doc, score))| SearchHit {
                passage_id: self.ids[doc as usize].clone(),
                score,
                rank: i + 1,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn passages(texts: &[&str]) -> Vec<Passage> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Passage {
                id: format!("p{i:03}"),
                article_id: format!("a{i}"),
                title: String::new(),
                text: t.to_string(),
                window_index: 0,
            })
            .collect()
    }

    fn index(texts: &[&str]) -> InvertedIndex<f64> {
        InvertedIndex::build(&passages(texts), Bm25Params::default()).unwrap()
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(tokenize("Giovanni Messe"), ["giovanni", "messe"]);
        assert_eq!(
            tokenize("armistice on 11 November 1918."),
            ["armistice", "on", "11", "november", "1918"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("aide-de-camp"), ["aide", "de", "camp"]);
    }

    #[test]
    fn build_counts_and_lengths() {
        let idx = index(&["the war ended", "war and war", "peace"]);
        let war = idx.postings("war");
        assert_eq!(war, &[Posting { doc: 0, tf: 1 }, Posting { doc: 1, tf: 2 }]);
        assert_eq!(idx.num_docs(), 3);

        let empty = index(&[]);
        assert_eq!(empty.num_docs(), 0);
        assert!(empty.search("war", 3).is_empty());

        assert_eq!(index(&["a b", "a"]).avgdl(), 1.5);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut ps = passages(&["a", "b"]);
        ps[1].id = ps[0].id.clone();
        let err = InvertedIndex::<f64>::build(&ps, Bm25Params::default()).unwrap_err();
        assert!(matches!(err, IndexError::DuplicateId(id) if id == "p000"));
    }

    #[test]
    fn params_validated() {
        assert!(Bm25Params::new(-0.1, 0.5).is_err());
        assert!(Bm25Params::new(1.2, 1.5).is_err());
        assert!(Bm25Params::new(f64::NAN, 0.5).is_err());
        assert!(Bm25Params::new(0.0, 1.0).is_ok());
    }

    #[test]
    fn single_document_score_is_idf() {
        let idx = InvertedIndex::<f64>::build(&passages(&["war"]), Bm25Params::new(0.9, 0.4).unwrap()).unwrap();
        let score = idx.bm25_score(&["war"], "p000").unwrap();
        approx::assert_relative_eq!(score, (4.0f64 / 3.0).ln(), max_relative = 1e-15);
        assert_eq!(idx.bm25_score(&["peace"], "p000").unwrap(), 0.0);
        assert!(matches!(idx.bm25_score(&["war"], "nope"), Err(IndexError::UnknownPassage(_))));
    }

    #[test]
    fn f32_instantiation_agrees() {
        let texts = ["the war ended in 1918", "war war war", "peace talks"];
        let ps = passages(&texts);
        let a = InvertedIndex::<f64>::build(&ps, Bm25Params::default()).unwrap();
        let b = InvertedIndex::<f32>::build(&ps, Bm25Params::default()).unwrap();
        let ha = a.search("war ended", 5);
        let hb = b.search("war ended", 5);
        assert_eq!(ha.len(), hb.len());
        for (x, y) in ha.iter().zip(&hb) {
            assert_eq!(x.passage_id, y.passage_id);
            approx::assert_relative_eq!(x.score, y.score as f64, max_relative = 1e-5);
        }
    }

    #[test]
    fn search_edge_cases() {
        let idx = index(&["alpha beta", "beta gamma", "delta"]);
        assert!(idx.search("zeta", 5).is_empty());
        let hits = idx.search("beta", 10);
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].rank, 1);
        assert_eq!(hits[1].rank, 2);
        // equal scores tie-break on ascending id
        assert_eq!(hits[0].passage_id, "p000");
        let filtered = idx.search_filtered("beta", 10, |id| id != "p000");
        assert_eq!(filtered.len(), 1);
        assert_eq!(filtered[0].passage_id, "p001");
        assert_eq!(filtered[0].rank, 1);
    }

    #[test]
    fn unrelated_passage_can_reorder_multi_term_queries() {
        // Adding a document changes N and avgdl, which moves idf and length
        // normalization by different amounts for different passages.
        let texts = ["b c d a a", "c a d", "a b c"];
        let before: Vec<String> = index(&texts).search("a b", 10).into_iter().map(|h| h.passage_id).collect();
        assert_eq!(before, ["p002", "p000", "p001"]);
        let after: Vec<String> =
            index(&[texts[0], texts[1], texts[2], "z z z z z"]).search("a b", 10).into_iter().map(|h| h.passage_id).collect();
        assert_eq!(after, ["p000", "p002", "p001"]);
    }

    fn corpus() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "f"]), 0..8), 1..25)
            .prop_map(|docs| docs.into_iter().map(|d| d.join(" ")).collect())
    }

    proptest! {
        #[test]
        fn search_prefix_and_score_consistency(texts in corpus(), query in "[a-g]( [a-g]){0,3}", k in 1usize..10, extra in 0usize..10) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let idx = index(&refs);
            let short = idx.search(&query, k);
            let long = idx.search(&query, k + extra);
            prop_assert_eq!(&long[..short.len()], &short[..]);
            let q = tokenize(&query);
            for hit in &long {
                let direct = idx.bm25_score(&q, &hit.passage_id).unwrap();
                prop_assert!((direct - hit.score).abs() <= 1e-9 * direct.abs().max(1e-300));
                prop_assert!(hit.score > 0.0);
            }
            for w in long.windows(2) {
                prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].passage_id < w[1].passage_id));
            }
        }

        #[test]
        fn duplicated_query_terms_do_not_change_scores(texts in corpus(), query in "[a-f]( [a-f]){0,3}") {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let idx = index(&refs);
            let q = tokenize(&query);
            let doubled: Vec<String> = q.iter().chain(q.iter()).cloned().collect();
            for id in idx.passage_ids() {
                prop_assert_eq!(idx.bm25_score(&q, id).unwrap(), idx.bm25_score(&doubled, id).unwrap());
            }
        }

        #[test]
        fn unrelated_passage_keeps_single_term_ordering(texts in corpus(), term in "[a-f]") {
            // Holds when the query's idf is a common factor and lengths are not normalized.
            let params = Bm25Params::new(0.9, 0.0).unwrap();
            let ps = passages(&texts.iter().map(String::as_str).collect::<Vec<_>>());
            let before: Vec<String> = InvertedIndex::<f64>::build(&ps, params).unwrap()
                .search(&term, 100).into_iter().map(|h| h.passage_id).collect();
            let mut more = ps.clone();
            more.push(Passage { id: "zzz".into(), article_id: "z".into(), title: String::new(), text: "zzz yyy".into(), window_index: 0 });
            let after: Vec<String> = InvertedIndex::<f64>::build(&more, params).unwrap()
                .search(&term, 100).into_iter().map(|h| h.passage_id).collect();
            prop_assert_eq!(before, after);
        }
    }
}
