use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    accuracy_boolean, evidence_f1, exact_match, max_over_golds, normalize_answer, recall_at_k_by, sari,
    serialize_decomposition, token_f1, EvalError,
};
use crate::corpus::{AnswerType, QaInstance, UNANSWERABLE};
use crate::pipeline::{AnswerRecord, ContextSource};

pub const DEFAULT_RECALL_K: usize = 10;

/// Which dataset's metric set to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetProfile {
    Iirc,
    Qasper,
    Strategyqa,
}

impl FromStr for DatasetProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iirc" => Ok(Self::Iirc),
            "qasper" => Ok(Self::Qasper),
            "strategyqa" => Ok(Self::Strategyqa),
            other => Err(format!("unknown dataset profile `{other}` (expected iirc, qasper or strategyqa)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScores {
    pub question_id: String,
    pub answer_type: AnswerType,
    pub metrics: BTreeMap<String, f64>,
    /// Metrics this instance could not be scored on, with the reason.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub excluded: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub profile: DatasetProfile,
    pub metric_names: Vec<String>,
    pub per_instance: Vec<InstanceScores>,
    /// Mean of each metric over the instances that have it.
    pub aggregate: BTreeMap<String, f64>,
    /// Number of instances behind each aggregate value.
    pub counts: BTreeMap<String, usize>,
    /// Per answer type aggregates.
    pub breakdowns: BTreeMap<String, BTreeMap<String, f64>>,
    /// Metrics of the profile that no instance could be scored on.
    pub absent: Vec<String>,
}

fn metric_names(profile: DatasetProfile, recall_k: usize) -> Vec<String> {
    match profile {
        DatasetProfile::Iirc => vec!["f1".into(), "em".into()],
        DatasetProfile::Qasper => vec!["answer_f1".into(), "evidence_f1".into()],
        DatasetProfile::Strategyqa => vec!["accuracy".into(), format!("recall@{recall_k}"), "sari".into()],
    }
}

fn breakdown_key(profile: DatasetProfile, answer_type: AnswerType) -> &'static str {
    match (profile, answer_type) {
        (DatasetProfile::Qasper, AnswerType::None) => UNANSWERABLE,
        (_, t) => t.as_str(),
    }
}

fn unanswerable_score(prediction: &str) -> f64 {
    if normalize_answer(prediction) == UNANSWERABLE {
        1.0
    } else {
        0.0
    }
}

fn score_instance(
    profile: DatasetProfile,
    record: &AnswerRecord,
    gold: &QaInstance,
    recall_k: usize,
) -> Result<InstanceScores, EvalError> {
    let mut metrics = BTreeMap::new();
    let mut excluded = BTreeMap::new();
    let answer = record.answer.as_str();
    match profile {
        DatasetProfile::Iirc => {
            let (f1, em) = if gold.is_unanswerable() {
                let s = unanswerable_score(answer);
                (s, s)
            } else {
                (max_over_golds(token_f1, answer, &gold.gold_answers)?, max_over_golds(exact_match, answer, &gold.gold_answers)?)
            };
            metrics.insert("f1".to_string(), f1);
            metrics.insert("em".to_string(), em);
        }
        DatasetProfile::Qasper => {
            let f1 = if gold.is_unanswerable() {
                unanswerable_score(answer)
            } else {
                max_over_golds(token_f1, answer, &gold.gold_answers)?
            };
            metrics.insert("answer_f1".to_string(), f1);
            let predicted: Vec<&str> = record.prompt_context_ids().collect();
            match evidence_f1(&predicted, &gold.gold_evidence_ids) {
                Ok(v) => {
                    metrics.insert("evidence_f1".to_string(), v);
                }
                Err(EvalError::EmptyGoldSets) => {
                    excluded.insert("evidence_f1".to_string(), "no gold evidence".to_string());
                }
                Err(e) => return Err(e),
            }
        }
        DatasetProfile::Strategyqa => {
            let gold_answer = gold.gold_answers.first().ok_or(EvalError::EmptyGolds)?;
            metrics.insert("accuracy".to_string(), accuracy_boolean(answer, gold_answer)?);

            let recall_name = format!("recall@{recall_k}");
            if record.context_source == ContextSource::Gold || record.contexts_used.is_empty() {
                excluded.insert(recall_name, "no retrieval log".to_string());
            } else {
                let ctx = &record.contexts_used;
                let recall = recall_at_k_by(ctx.len(), &gold.gold_evidence_ids, recall_k, |g, pos| {
                    ctx[pos].id == g || ctx[pos].article_id == g
                });
                match recall {
                    Ok(v) => {
                        metrics.insert(recall_name, v);
                    }
                    Err(EvalError::EmptyGoldSets) => {
                        excluded.insert(recall_name, "no gold evidence".to_string());
                    }
                    Err(e) => return Err(e),
                }
            }

            if gold.subquestions.is_empty() {
                excluded.insert("sari".to_string(), "no reference decomposition".to_string());
            } else if record.subquestions.is_empty() {
                excluded.insert("sari".to_string(), "no predicted decomposition".to_string());
            } else {
                let prediction = serialize_decomposition(&record.subquestions);
                let reference = serialize_decomposition(&gold.subquestions);
                metrics.insert("sari".to_string(), sari::<f64, _>(&gold.question, &prediction, &[reference])?);
            }
        }
    }
    Ok(InstanceScores { question_id: record.question_id.clone(), answer_type: gold.answer_type, metrics, excluded })
}

fn mean_by_metric<'a>(rows: impl Iterator<Item = &'a InstanceScores>) -> (BTreeMap<String, f64>, BTreeMap<String, usize>) {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for row in rows {
        for (name, &v) in &row.metrics {
            let e = sums.entry(name.clone()).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    let means = sums.iter().map(|(k, &(s, n))| (k.clone(), s / n as f64)).collect();
    let counts = sums.into_iter().map(|(k, (_, n))| (k, n)).collect();
    (means, counts)
}

pub fn evaluate_run(records: &[AnswerRecord], gold: &[QaInstance], profile: DatasetProfile) -> Result<EvalReport, EvalError> {
    evaluate_run_with(records, gold, profile, DEFAULT_RECALL_K)
}

/// Scores every record against its gold instance. Gold instances without a
/// record are ignored; records without a gold instance are an error.
pub fn evaluate_run_with(
    records: &[AnswerRecord],
    gold: &[QaInstance],
    profile: DatasetProfile,
    recall_k: usize,
) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NothingToEvaluate);
    }
    if recall_k == 0 {
        return Err(EvalError::ZeroK);
    }
    let by_id: HashMap<&str, &QaInstance> = gold.iter().map(|g| (g.question_id.as_str(), g)).collect();
    let unmatched: Vec<String> =
        records.iter().filter(|r| !by_id.contains_key(r.question_id.as_str())).map(|r| r.question_id.clone()).collect();
    if !unmatched.is_empty() {
        return Err(EvalError::Unmatched(unmatched));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = records.iter().find(|r| !seen.insert(r.question_id.as_str())) {
        return Err(EvalError::DuplicateRecord(dup.question_id.clone()));
    }

    let per_instance = records
        .iter()
        .map(|r| score_instance(profile, r, by_id[r.question_id.as_str()], recall_k))
        .collect::<Result<Vec<_>, _>>()?;
    let (aggregate, counts) = mean_by_metric(per_instance.iter());

    let mut types: Vec<&'static str> = per_instance.iter().map(|s| breakdown_key(profile, s.answer_type)).collect();
    types.sort_unstable();
    types.dedup();
    let breakdowns = types
        .into_iter()
        .map(|t| {
            let (means, _) = mean_by_metric(per_instance.iter().filter(|s| breakdown_key(profile, s.answer_type) == t));
            (t.to_string(), means)
        })
        .collect();

    let metric_names = metric_names(profile, recall_k);
    let absent = metric_names.iter().filter(|m| !aggregate.contains_key(*m)).cloned().collect();
    Ok(EvalReport { profile, metric_names, per_instance, aggregate, counts, breakdowns, absent })
}

impl EvalReport {
    /// Human-readable table with scores multiplied by 100.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let width = self.metric_names.iter().map(String::len).max().unwrap_or(6).max(6);
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}", "metric", "score", "n");
        for name in &self.metric_names {
            match self.aggregate.get(name) {
                Some(v) => {
                    let _ = writeln!(out, "{name:<width$}  {:>6.1}  {:>6}", v * 100.0, self.counts[name]);
                }
                None => {
                    let _ = writeln!(out, "{name:<width$}  {:>6}  {:>6}", "absent", 0);
                }
            }
        }
        if !self.breakdowns.is_empty() {
            let type_width = self.breakdowns.keys().map(String::len).max().unwrap_or(4).max(11);
            let _ = writeln!(out);
            let _ = write!(out, "{:<type_width$}", "answer type");
            for name in &self.metric_names {
                let _ = write!(out, "  {name:>width$}");
            }
            let _ = writeln!(out);
            for (t, means) in &self.breakdowns {
                let _ = write!(out, "{t:<type_width$}");
                for name in &self.metric_names {
                    match means.get(name) {
                        Some(v) => {
                            let _ = write!(out, "  {:>width$.1}", v * 100.0);
                        }
                        None => {
                            let _ = write!(out, "  {:>width$}", "-");
                        }
                    }
                }
                let _ = writeln!(out);
            }
        }
        out
    }

    /// One JSON line per instance followed by a summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.per_instance {
            out.push_str(&serde_json::to_string(row).expect("scores serialize"));
            out.push('\n');
        }
        let summary = serde_json::json!({
            "profile": self.profile,
            "aggregate": self.aggregate,
            "counts": self.counts,
            "breakdowns": self.breakdowns,
            "absent": self.absent,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}
