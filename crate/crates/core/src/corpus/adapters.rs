//! Converters from the raw IIRC, Qasper and StrategyQA releases into the
//! canonical corpus and question schema.
//!
//! Each adapter takes already-parsed JSON so callers choose how to read the
//! (often large) release files.

use std::collections::{BTreeSet, HashMap};

use serde_json::Value;

use super::{AnswerType, Article, Passage, QaInstance, UNANSWERABLE};

#[derive(Debug, thiserror::Error)]
#[error("unexpected {dataset} layout: {message}")]
pub struct AdapterError {
    pub dataset: &'static str,
    pub message: String,
}

/// Output of a dataset adapter.
#[derive(Debug, Default, Clone)]
pub struct Adapted {
    /// Articles to be windowed before indexing.
    pub articles: Vec<Article>,
    /// Passages that must not be windowed (paragraph corpora).
    pub passages: Vec<Passage>,
    /// Gold-context snippets referenced by evidence ids but kept out of the
    /// searchable corpus.
    pub gold_passages: Vec<Passage>,
    pub instances: Vec<QaInstance>,
}

fn shape(dataset: &'static str, message: impl Into<String>) -> AdapterError {
    AdapterError { dataset, message: message.into() }
}

fn str_field<'a>(v: &'a Value, key: &str) -> &'a str {
    v.get(key).and_then(Value::as_str).unwrap_or("")
}

fn array<'a>(v: &'a Value, key: &str) -> &'a [Value] {
    v.get(key).and_then(Value::as_array).map(Vec::as_slice).unwrap_or(&[])
}

/// Qasper: one passage per paper paragraph (abstract first), one instance
/// per question. Evidence paragraphs are matched back to passage ids by text;
/// evidence that is not a paragraph (figure and table captions) is dropped.
pub fn qasper(release: &Value) -> Result<Adapted, AdapterError> {
    const DS: &str = "qasper";
    let papers = release.as_object().ok_or_else(|| shape(DS, "top level must be an object keyed by paper id"))?;
    let mut out = Adapted::default();
    for (paper_id, paper) in papers {
        let mut by_text: HashMap<String, String> = HashMap::new();
        let mut paragraphs: Vec<(String, String)> = Vec::new();
        let abstract_text = str_field(paper, "abstract");
        if !abstract_text.trim().is_empty() {
            paragraphs.push(("Abstract".into(), abstract_text.to_string()));
        }
        for section in array(paper, "full_text") {
            let name = str_field(section, "section_name").to_string();
            for para in array(section, "paragraphs") {
                if let Some(text) = para.as_str().filter(|t| !t.trim().is_empty()) {
                    paragraphs.push((name.clone(), text.to_string()));
                }
            }
        }
        for (i, (section, text)) in paragraphs.into_iter().enumerate() {
            let id = Passage::window_id(paper_id, i);
            by_text.entry(text.trim().to_string()).or_insert_with(|| id.clone());
            out.passages.push(Passage {
                id,
                article_id: paper_id.clone(),
                title: section,
                text,
                window_index: i,
            });
        }

        for qa in array(paper, "qas") {
            let question_id = str_field(qa, "question_id").to_string();
            let mut typed: Vec<(AnswerType, String, Vec<String>)> = Vec::new();
            for annotation in array(qa, "answers") {
                let answer = annotation.get("answer").unwrap_or(annotation);
                let (kind, text) = qasper_answer(answer);
                let evidence = array(answer, "evidence")
                    .iter()
                    .filter_map(Value::as_str)
                    .filter_map(|t| by_text.get(t.trim()).cloned())
                    .collect();
                typed.push((kind, text, evidence));
            }
            let Some(&(answer_type, _, _)) = typed.first().map(|t| t) else {
                continue;
            };
            let mut gold_answers: Vec<String> = Vec::new();
            for (kind, text, _) in &typed {
                if *kind == answer_type && !gold_answers.contains(text) {
                    gold_answers.push(text.clone());
                }
            }
            out.instances.push(QaInstance {
                question_id,
                question: str_field(qa, "question").to_string(),
                gold_answers,
                answer_type,
                gold_evidence_ids: typed.into_iter().map(|(_, _, ev)| ev).collect(),
                linked_article_ids: Vec::new(),
                grounding_article_id: Some(paper_id.clone()),
                subquestions: Vec::new(),
            });
        }
    }
    Ok(out)
}

fn qasper_answer(answer: &Value) -> (AnswerType, String) {
    if answer.get("unanswerable").and_then(Value::as_bool) == Some(true) {
        return (AnswerType::None, UNANSWERABLE.into());
    }
    let spans: Vec<&str> = array(answer, "extractive_spans").iter().filter_map(Value::as_str).collect();
    if !spans.is_empty() {
        return (AnswerType::Extractive, spans.join(", "));
    }
    if let Some(yes) = answer.get("yes_no").and_then(Value::as_bool) {
        return (AnswerType::Boolean, if yes { "yes" } else { "no" }.into());
    }
    (AnswerType::Abstractive, str_field(answer, "free_form_answer").to_string())
}

/// StrategyQA: each evidence paragraph becomes an article (to be cut into
/// three-sentence windows); evidence ids are paragraph ids, matched against
/// passage article ids at evaluation time.
pub fn strategyqa(questions: &Value, paragraphs: &Value) -> Result<Adapted, AdapterError> {
    const DS: &str = "strategyqa";
    let questions = questions.as_array().ok_or_else(|| shape(DS, "questions file must be a list"))?;
    let paragraphs = paragraphs
        .as_object()
        .ok_or_else(|| shape(DS, "paragraphs file must be an object keyed by paragraph id"))?;
    let mut out = Adapted::default();
    for (id, para) in paragraphs {
        out.articles.push(Article {
            id: id.clone(),
            title: str_field(para, "title").to_string(),
            text: str_field(para, "content").to_string(),
        });
    }
    for q in questions {
        let answer = q
            .get("answer")
            .and_then(Value::as_bool)
            .ok_or_else(|| shape(DS, format!("question {} lacks a boolean answer", str_field(q, "qid"))))?;
        let gold_evidence_ids = array(q, "evidence")
            .iter()
            .map(|annotator| {
                let mut ids = BTreeSet::new();
                collect_evidence_ids(annotator, &mut ids);
                ids.into_iter().collect()
            })
            .collect();
        out.instances.push(QaInstance {
            question_id: str_field(q, "qid").to_string(),
            question: str_field(q, "question").to_string(),
            gold_answers: vec![if answer { "yes" } else { "no" }.into()],
            answer_type: AnswerType::Boolean,
            gold_evidence_ids,
            linked_article_ids: Vec::new(),
            grounding_article_id: None,
            subquestions: array(q, "decomposition").iter().filter_map(Value::as_str).map(String::from).collect(),
        });
    }
    Ok(out)
}

fn collect_evidence_ids(v: &Value, ids: &mut BTreeSet<String>) {
    match v {
        Value::String(s) if s != "operation" && s != "no_evidence" => {
            ids.insert(s.clone());
        }
        Value::Array(items) => items.iter().for_each(|i| collect_evidence_ids(i, ids)),
        _ => {}
    }
}

/// IIRC: linked Wikipedia articles (keyed by lowercased title) become
/// articles; the main context paragraphs are added as articles too. Gold
/// context snippets become `gold_passages` with ids `<qid>#ctx<i>`.
pub fn iirc(questions: &Value, context_articles: &Value) -> Result<Adapted, AdapterError> {
    const DS: &str = "iirc";
    let mains = questions.as_array().ok_or_else(|| shape(DS, "questions file must be a list"))?;
    let linked = context_articles
        .as_object()
        .ok_or_else(|| shape(DS, "context articles must be an object keyed by title"))?;
    let mut out = Adapted::default();
    for (title, text) in linked {
        out.articles.push(Article {
            id: title.to_lowercase(),
            title: title.clone(),
            text: text.as_str().unwrap_or("").to_string(),
        });
    }
    for main in mains {
        let main_title = str_field(main, "title").to_string();
        let main_id = format!("main:{}", str_field(main, "pid"));
        out.articles.push(Article { id: main_id.clone(), title: main_title.clone(), text: str_field(main, "text").to_string() });
        let mut links: Vec<String> = array(main, "links")
            .iter()
            .map(|l| str_field(l, "target").to_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
        links.sort();
        links.dedup();
        links.insert(0, main_id.clone());

        for q in array(main, "questions") {
            let qid = str_field(q, "qid").to_string();
            let (answer_type, gold_answers) = iirc_answer(q.get("answer").unwrap_or(&Value::Null));
            let mut evidence = Vec::new();
            for (i, ctx) in array(q, "context").iter().enumerate() {
                let source = str_field(ctx, "passage");
                let (article_id, title) = if source == "main" || source.is_empty() {
                    (main_id.clone(), main_title.clone())
                } else {
                    (source.to_lowercase(), source.to_string())
                };
                let id = format!("{qid}#ctx{i}");
                out.gold_passages.push(Passage {
                    id: id.clone(),
                    article_id,
                    title,
                    text: str_field(ctx, "text").to_string(),
                    window_index: i,
                });
                evidence.push(id);
            }
            out.instances.push(QaInstance {
                question_id: qid,
                question: str_field(q, "question").to_string(),
                gold_answers,
                answer_type,
                gold_evidence_ids: vec![evidence],
                linked_article_ids: links.clone(),
                grounding_article_id: None,
                subquestions: Vec::new(),
            });
        }
    }
    Ok(out)
}

fn iirc_answer(answer: &Value) -> (AnswerType, Vec<String>) {
    match str_field(answer, "type") {
        "span" => {
            let spans: Vec<&str> = array(answer, "answer_spans").iter().map(|s| str_field(s, "text")).collect();
            (AnswerType::Span, vec![spans.join(", ")])
        }
        "binary" => (AnswerType::Binary, vec![str_field(answer, "answer_value").to_lowercase()]),
        "value" => {
            let value = str_field(answer, "answer_value");
            let unit = str_field(answer, "answer_unit");
            let text = if unit.is_empty() { value.to_string() } else { format!("{value} {unit}") };
            (AnswerType::Numeric, vec![text])
        }
        _ => (AnswerType::None, vec![UNANSWERABLE.into()]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn qasper_paragraphs_and_types() {
        let release = json!({
            "p1": {
                "title": "Paper",
                "abstract": "We study segmentation.",
                "full_text": [{"section_name": "Method", "paragraphs": ["Text is split by rules.", ""]}],
                "qas": [
                    {"question": "How is the text segmented?", "question_id": "q1",
                     "answers": [
                        {"answer": {"unanswerable": false, "extractive_spans": ["by rules"], "yes_no": null,
                                    "free_form_answer": "", "evidence": ["Text is split by rules.", "FLOAT SELECTED: Table 1"]}},
                        {"answer": {"unanswerable": true, "extractive_spans": [], "yes_no": null,
                                    "free_form_answer": "", "evidence": []}}
                     ]},
                    {"question": "Is it new?", "question_id": "q2",
                     "answers": [{"answer": {"unanswerable": false, "extractive_spans": [], "yes_no": true,
                                             "free_form_answer": "", "evidence": []}}]}
                ]
            }
        });
        let out = qasper(&release).unwrap();
        let ids: Vec<_> = out.passages.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["p1#0", "p1#1"]);
        let q1 = &out.instances[0];
        assert_eq!(q1.answer_type, AnswerType::Extractive);
        assert_eq!(q1.gold_answers, ["by rules"]);
        assert_eq!(q1.gold_evidence_ids, vec![vec!["p1#1".to_string()], vec![]]);
        assert_eq!(q1.grounding_article_id.as_deref(), Some("p1"));
        assert_eq!(out.instances[1].gold_answers, ["yes"]);
        assert!(q1.check().is_ok());
    }

    #[test]
    fn strategyqa_evidence_flattening() {
        let questions = json!([{
            "qid": "s1", "question": "Are more people today related to Genghis Khan than Julius Caesar?",
            "answer": true,
            "decomposition": ["How many kids did Julius Caesar have?", "How many kids did Genghis Khan have?"],
            "evidence": [[[["Julius Caesar-75"]], [["Genghis Khan-17"], "operation"]], [["no_evidence"]]]
        }]);
        let paragraphs = json!({"Julius Caesar-75": {"title": "Julius Caesar", "content": "He had a child."}});
        let out = strategyqa(&questions, &paragraphs).unwrap();
        let q = &out.instances[0];
        assert_eq!(q.gold_answers, ["yes"]);
        assert_eq!(q.gold_evidence_ids[0], ["Genghis Khan-17", "Julius Caesar-75"]);
        assert!(q.gold_evidence_ids[1].is_empty());
        assert_eq!(q.subquestions.len(), 2);
        assert_eq!(out.articles[0].id, "Julius Caesar-75");
    }

    #[test]
    fn iirc_links_and_gold_snippets() {
        let questions = json!([{
            "title": "Giovanni Messe", "pid": "p7", "text": "Messe served the king.",
            "links": [{"target": "World War I"}, {"target": "Victor Emmanuel III"}],
            "questions": [{
                "qid": "q9", "question": "How long had the First World War been over when Messe was named aide-de-camp?",
                "answer": {"type": "value", "answer_value": "5", "answer_unit": "years"},
                "context": [{"passage": "main", "text": "aide-de-camp from 1923"},
                            {"passage": "World War I", "text": "armistice on 11 November 1918"}]
            }]
        }]);
        let articles = json!({"World War I": "The war ended in 1918."});
        let out = iirc(&questions, &articles).unwrap();
        let q = &out.instances[0];
        assert_eq!(q.gold_answers, ["5 years"]);
        assert_eq!(q.answer_type, AnswerType::Numeric);
        assert_eq!(q.linked_article_ids, ["main:p7", "victor emmanuel iii", "world war i"]);
        assert_eq!(out.gold_passages[1].article_id, "world war i");
        assert_eq!(q.gold_evidence_ids[0], ["q9#ctx0", "q9#ctx1"]);
    }
}
