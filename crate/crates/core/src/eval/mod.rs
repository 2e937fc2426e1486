//! Answer, evidence, retrieval and decomposition metrics.

mod report;
mod sari;

use std::collections::{HashMap, HashSet};

pub use report::{evaluate_run, evaluate_run_with, DatasetProfile, EvalReport, InstanceScores, DEFAULT_RECALL_K};
pub use sari::{sari, serialize_decomposition, DECOMPOSITION_SEPARATOR, SARI_MAX_ORDER};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no gold answers to compare against")]
    EmptyGolds,
    #[error("SARI needs at least one reference")]
    EmptyReferences,
    #[error("gold answer `{0}` is neither yes nor no")]
    InvalidBooleanGold(String),
    #[error("all gold evidence sets are empty")]
    EmptyGoldSets,
    #[error("k must be positive")]
    ZeroK,
    #[error("nothing to evaluate")]
    NothingToEvaluate,
    #[error("records without gold instances: {}", .0.join(", "))]
    Unmatched(Vec<String>),
    #[error("question `{0}` has more than one record")]
    DuplicateRecord(String),
}

/// Lowercase, drop ASCII punctuation, drop the articles a/an/the, and
/// collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered: String = text.to_lowercase().chars().filter(|c| !c.is_ascii_punctuation()).collect();
    lowered
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn count_tokens(text: &str) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for t in text.split_whitespace() {
        *counts.entry(t).or_insert(0) += 1;
    }
    counts
}

/// Token-level F1 between normalized strings.
pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let (p, g) = (normalize_answer(prediction), normalize_answer(gold));
    let (p_len, g_len) = (p.split_whitespace().count(), g.split_whitespace().count());
    match (p_len, g_len) {
        (0, 0) => return 1.0,
        (0, _) | (_, 0) => return 0.0,
        _ => {}
    }
    let gc = count_tokens(&g);
    let common: usize = count_tokens(&p).iter().map(|(t, &c)| c.min(gc.get(t).copied().unwrap_or(0))).sum();
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p_len as f64;
    let recall = common as f64 / g_len as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn exact_match(prediction: &str, gold: &str) -> f64 {
    if normalize_answer(prediction) == normalize_answer(gold) {
        1.0
    } else {
        0.0
    }
}

/// Best score of `metric` against any gold answer.
pub fn max_over_golds<G: AsRef<str>>(
    metric: impl Fn(&str, &str) -> f64,
    prediction: &str,
    golds: &[G],
) -> Result<f64, EvalError> {
    if golds.is_empty() {
        return Err(EvalError::EmptyGolds);
    }
    Ok(golds.iter().map(|g| metric(prediction, g.as_ref())).fold(f64::NEG_INFINITY, f64::max))
}

fn yes_no(text: &str) -> Option<bool> {
    let t = text.trim_start().to_lowercase();
    if t.starts_with("yes") || t.starts_with("true") {
        Some(true)
    } else if t.starts_with("no") || t.starts_with("false") {
        Some(false)
    } else {
        None
    }
}

/// 1 when the prediction's leading yes/true or no/false matches the gold.
pub fn accuracy_boolean(prediction: &str, gold: &str) -> Result<f64, EvalError> {
    let gold_value = match normalize_answer(gold).as_str() {
        "yes" => true,
        "no" => false,
        _ => return Err(EvalError::InvalidBooleanGold(gold.to_string())),
    };
    Ok(if yes_no(prediction) == Some(gold_value) { 1.0 } else { 0.0 })
}

/// Recall of the best gold set within the first `k` retrieved items, where
/// `matches(gold_id, position)` decides whether a retrieved item covers a
/// gold id.
pub fn recall_at_k_by<G: AsRef<str>>(
    retrieved: usize,
    gold_sets: &[Vec<G>],
    k: usize,
    matches: impl Fn(&str, usize) -> bool,
) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let depth = retrieved.min(k);
    gold_sets
        .iter()
        .filter_map(|set| {
            let unique: HashSet<&str> = set.iter().map(AsRef::as_ref).collect();
            if unique.is_empty() {
                return None;
            }
            let found = unique.iter().filter(|g| (0..depth).any(|pos| matches(g, pos))).count();
            Some(found as f64 / unique.len() as f64)
        })
        .reduce(f64::max)
        .ok_or(EvalError::EmptyGoldSets)
}

/// Recall of the best gold set within the first `k` retrieved ids.
pub fn recall_at_k<R: AsRef<str>, G: AsRef<str>>(
    retrieved: &[R],
    gold_sets: &[Vec<G>],
    k: usize,
) -> Result<f64, EvalError> {
    recall_at_k_by(retrieved.len(), gold_sets, k, |g, pos| retrieved[pos].as_ref() == g)
}

/// Best set-F1 between the predicted ids and any non-empty gold set.
pub fn evidence_f1<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold_sets: &[Vec<G>]) -> Result<f64, EvalError> {
    let pred: HashSet<&str> = predicted.iter().map(AsRef::as_ref).collect();
    gold_sets
        .iter()
        .filter_map(|set| {
            let gold: HashSet<&str> = set.iter().map(AsRef::as_ref).collect();
            if gold.is_empty() {
                return None;
            }
            let common = pred.intersection(&gold).count();
            if common == 0 {
                return Some(0.0);
            }
            let p = common as f64 / pred.len() as f64;
            let r = common as f64 / gold.len() as f64;
            Some(2.0 * p * r / (p + r))
        })
        .reduce(f64::max)
        .ok_or(EvalError::EmptyGoldSets)
}
