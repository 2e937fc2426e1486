use std::collections::{HashMap, HashSet};

use super::EvalError;
use crate::scalar::{harmonic, ratio_or_one};
use crate::Scalar;

pub const SARI_MAX_ORDER: usize = 4;
pub const DECOMPOSITION_SEPARATOR: &str = " ; ";

/// Joins subquestions into the single string that SARI scores.
pub fn serialize_decomposition<S: AsRef<str>>(subquestions: &[S]) -> String {
    subquestions.iter().map(|s| s.as_ref().trim()).collect::<Vec<_>>().join(DECOMPOSITION_SEPARATOR)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

fn eval_tokens(text: &str) -> Vec<String> {
    text.to_lowercase().split_whitespace().map(str::to_string).collect()
}

/// SARI of `prediction` as a rewrite of `source` against `references`.
///
/// Per n-gram order 1..=4 this averages add-F1, keep-F1 and delete
/// precision, with reference counts averaged over the references. Ratios
/// with an empty denominator count as 1.
pub fn sari<S: Scalar, R: AsRef<str>>(source: &str, prediction: &str, references: &[R]) -> Result<S, EvalError> {
    if references.is_empty() {
        return Err(EvalError::EmptyReferences);
    }
    let src = eval_tokens(source);
    let out = eval_tokens(prediction);
    let refs: Vec<Vec<String>> = references.iter().map(|r| eval_tokens(r.as_ref())).collect();
    let num_refs = S::from_count(refs.len());

    let mut total = S::zero();
    for n in 1..=SARI_MAX_ORDER {
        let i = ngram_counts(&src, n);
        let o = ngram_counts(&out, n);
        let mut r: HashMap<&[String], S> = HashMap::new();
        for tokens in &refs {
            for (g, c) in ngram_counts(tokens, n) {
                *r.entry(g).or_insert_with(S::zero) += S::from_count(c) / num_refs;
            }
        }
        let grams: HashSet<&[String]> = i.keys().chain(o.keys()).chain(r.keys()).copied().collect();

        let zero = S::zero();
        let (mut keep_num, mut keep_out, mut keep_ref) = (zero, zero, zero);
        let (mut del_num, mut del_out) = (zero, zero);
        let (mut add_num, mut add_out, mut add_ref) = (zero, zero, zero);
        for g in grams {
            let ci = S::from_count(i.get(g).copied().unwrap_or(0));
            let co = S::from_count(o.get(g).copied().unwrap_or(0));
            let cr = r.get(g).copied().unwrap_or(zero);

            let kept_out = ci.min(co);
            let kept_ref = ci.min(cr);
            keep_num += kept_out.min(kept_ref);
            keep_out += kept_out;
            keep_ref += kept_ref;

            let deleted_out = (ci - co).max(zero);
            let deleted_ref = (ci - cr).max(zero);
            del_num += deleted_out.min(deleted_ref);
            del_out += deleted_out;

            let added_out = (co - ci).max(zero);
            add_num += added_out.min(cr);
            add_out += added_out;
            add_ref += (cr - ci).max(zero);
        }
        let f_keep = harmonic(ratio_or_one(keep_num, keep_out), ratio_or_one(keep_num, keep_ref));
        let p_del = ratio_or_one(del_num, del_out);
        let f_add = harmonic(ratio_or_one(add_num, add_out), ratio_or_one(add_num, add_ref));
        total += (f_add + f_keep + p_del) / S::lit(3.0);
    }
    Ok(total / S::from_count(SARI_MAX_ORDER))
}
