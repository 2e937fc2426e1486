//! Nearest-neighbour selection of few-shot examples by question embedding.

use std::cmp::Ordering;

use super::{PromptError, PromptExample};
use crate::providers::EmbeddingClient;
use crate::Scalar;

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine_similarity<S: Scalar>(a: &[S], b: &[S]) -> S {
    assert_eq!(a.len(), b.len(), "cosine similarity of vectors with different dimensions");
    let (mut dot, mut na, mut nb) = (S::zero(), S::zero(), S::zero());
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == S::zero() || nb == S::zero() {
        return S::zero();
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Indices of the `k` pool vectors most similar to `query`, least similar
/// first. Ties go to the lower pool index, which ends up closer to the end.
pub fn nearest<S: Scalar>(query: &[S], pool: &[&[S]], k: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, S)> = pool.iter().enumerate().map(|(i, v)| (i, cosine_similarity(query, v))).collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored.reverse();
    scored.into_iter().map(|(i, _)| i).collect()
}

/// Picks the `k` examples whose questions embed closest to `question`.
/// Examples without a stored embedding are embedded on the fly.
pub fn knn_select_indices(
    question: &str,
    pool: &[PromptExample],
    k: usize,
    embedder: &EmbeddingClient,
) -> Result<Vec<usize>, PromptError> {
    if pool.is_empty() {
        return Err(PromptError::EmptyPool);
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let missing: Vec<String> =
        pool.iter().filter(|ex| ex.embedding.is_none()).map(|ex| ex.question.clone()).collect();
    let mut fresh = if missing.is_empty() { Vec::new() } else { embedder.embed(&missing)? }.into_iter();
    let vectors: Vec<_> = pool
        .iter()
        .map(|ex| match &ex.embedding {
            Some(v) => v.clone(),
            None => fresh.next().expect("one embedding per missing example"),
        })
        .collect();
    let query = embedder.embed_one(question)?;
    let dim = query.dimension();
    if let Some(index) = vectors.iter().position(|v| v.dimension() != dim) {
        return Err(PromptError::InvalidExample {
            index,
            message: format!("embedding dimension {} differs from query dimension {dim}", vectors[index].dimension()),
        });
    }
    let refs: Vec<&[f64]> = vectors.iter().map(|v| v.values()).collect();
    Ok(nearest(query.values(), &refs, k))
}

/// Like [`knn_select_indices`] but returns the examples themselves.
pub fn knn_select(
    question: &str,
    pool: &[PromptExample],
    k: usize,
    embedder: &EmbeddingClient,
) -> Result<Vec<PromptExample>, PromptError> {
    Ok(knn_select_indices(question, pool, k, embedder)?.into_iter().map(|i| pool[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;
    use std::sync::Arc;

    use super::*;
    use crate::providers::mock::{FixedEmbedder, HashEmbedder};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ex(q: &str) -> PromptExample {
        PromptExample {
            id: q.into(),
            contexts: vec![],
            question: q.into(),
            evidence: String::new(),
            answer: "a".into(),
            embedding: None,
        }
    }

    #[test]
    fn cosine_basics() {
        assert_relative_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_relative_eq!(cosine_similarity(&[1.0, 1.0], &[2.0, 2.0]), 1.0);
        assert_relative_eq!(cosine_similarity(&[0.0f32, 0.0], &[1.0, 2.0]), 0.0);
        assert_relative_eq!(cosine_similarity(&[1.0f32, 0.0], &[-3.0, 0.0]), -1.0);
    }

    #[test]
    fn most_similar_goes_last() {
        let table: HashMap<String, Vec<f64>> = [
            ("q", vec![1.0, 0.0]),
            ("near", vec![0.9, 0.1]),
            ("mid", vec![0.5, 0.5]),
            ("far", vec![0.0, 1.0]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let client = EmbeddingClient::new(Arc::new(FixedEmbedder::new(table)));
        let pool = [ex("far"), ex("near"), ex("mid")];
        let picked = knn_select("q", &pool, 2, &client).unwrap();
        let qs: Vec<_> = picked.iter().map(|e| e.question.as_str()).collect();
        assert_eq!(qs, ["mid", "near"]);
        assert_eq!(knn_select_indices("q", &pool, 10, &client).unwrap(), vec![0, 2, 1]);
        assert!(knn_select_indices("q", &pool, 0, &client).unwrap().is_empty());
        assert!(matches!(knn_select_indices("q", &[], 1, &client), Err(PromptError::EmptyPool)));
    }

    #[test]
    fn ties_prefer_lower_index_nearest_the_end() {
        let v = [1.0, 0.0];
        let pool: Vec<&[f64]> = vec![&v, &v, &v];
        assert_eq!(nearest(&[1.0, 0.0], &pool, 2), vec![1, 0]);
    }

    #[test]
    fn stored_embeddings_skip_the_backend() {
        let backend = Arc::new(HashEmbedder::new(8));
        let client = EmbeddingClient::new(backend.clone());
        let mut pool = vec![ex("a"), ex("b")];
        for e in &mut pool {
            e.embedding = Some(crate::providers::EmbeddingVector::new(backend.vector(&e.question)).unwrap());
        }
        let picked = knn_select_indices("a", &pool, 1, &client).unwrap();
        assert_eq!(picked, vec![0]);
        assert_eq!(backend.calls(), 1);
    }

    proptest! {
        #[test]
        fn nearest_matches_sorted_oracle(
            pool in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..30),
            q in prop::collection::vec(-1.0f64..1.0, 3),
            k in 1usize..40,
        ) {
            let refs: Vec<&[f64]> = pool.iter().map(|v| v.as_slice()).collect();
            let got = nearest(&q, &refs, k);
            prop_assert_eq!(got.len(), k.min(pool.len()));
            let sims: Vec<f64> = got.iter().map(|&i| cosine_similarity(&q, &pool[i])).collect();
            prop_assert!(sims.windows(2).all(|w| w[0] <= w[1]));
            let worst_kept = sims[0];
            for (i, v) in pool.iter().enumerate() {
                if !got.contains(&i) {
                    prop_assert!(cosine_similarity(&q, v) <= worst_kept);
                }
            }
        }
    }
}
