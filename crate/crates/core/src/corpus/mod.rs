//! Canonical data schema, corpus ingestion and article windowing.
//!
//! Corpus files are UTF-8 JSON Lines with one record per line:
//!
//! ```text
//! {"id": "a1", "title": "World War I", "contents": "Germany signed an armistice ..."}
//! ```
//!
//! Passage files use the same three fields and may add `article_id` and
//! `window_index`. Question files carry one [`QaInstance`] per line.

pub mod adapters;
mod jsonl;
mod store;

use std::collections::HashSet;
use std::num::NonZeroUsize;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use jsonl::{write_jsonl, JsonlReader};
pub use store::PassageStore;

/// Marker used as the single gold answer of unanswerable questions.
pub const UNANSWERABLE: &str = "unanswerable";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("gold evidence id `{id}` of question `{question_id}` is not in the corpus")]
    UnresolvedEvidence { question_id: String, id: String },
}

/// A source document before windowing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub title: String,
    #[serde(rename = "contents")]
    pub text: String,
}

/// A retrieval unit: a window of consecutive sentences, or a whole paragraph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub article_id: String,
    pub title: String,
    #[serde(rename = "contents")]
    pub text: String,
    pub window_index: usize,
}

impl Passage {
    /// Passage id for window `index` of `article_id`.
    pub fn window_id(article_id: &str, index: usize) -> String {
        format!("{article_id}#{index}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerType {
    Span,
    Binary,
    Numeric,
    Abstractive,
    Extractive,
    Boolean,
    None,
}

impl AnswerType {
    pub fn as_str(self) -> &'static str {
        match self {
            AnswerType::Span => "span",
            AnswerType::Binary => "binary",
            AnswerType::Numeric => "numeric",
            AnswerType::Abstractive => "abstractive",
            AnswerType::Extractive => "extractive",
            AnswerType::Boolean => "boolean",
            AnswerType::None => "none",
        }
    }
}

/// One evaluation question with its gold annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaInstance {
    pub question_id: String,
    pub question: String,
    pub gold_answers: Vec<String>,
    pub answer_type: AnswerType,
    /// One id set per annotator reference.
    #[serde(default)]
    pub gold_evidence_ids: Vec<Vec<String>>,
    #[serde(default)]
    pub linked_article_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grounding_article_id: Option<String>,
    /// Reference decomposition, when the dataset provides one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subquestions: Vec<String>,
}

impl QaInstance {
    pub fn is_unanswerable(&self) -> bool {
        self.answer_type == AnswerType::None
    }

    /// First non-empty annotator evidence set, if any.
    pub fn primary_evidence(&self) -> Option<&[String]> {
        self.gold_evidence_ids
            .iter()
            .find(|set| !set.is_empty())
            .map(Vec::as_slice)
    }

    fn check(&self) -> Result<(), String> {
        if self.question_id.is_empty() {
            return Err("question_id must be non-empty".into());
        }
        if self.gold_answers.is_empty() {
            return Err("gold_answers must hold at least one answer".into());
        }
        let marker_only = self.gold_answers.len() == 1 && self.gold_answers[0] == UNANSWERABLE;
        if (self.answer_type == AnswerType::None) != marker_only {
            return Err(format!(
                "answer_type `none` requires gold_answers == [\"{UNANSWERABLE}\"] and vice versa"
            ));
        }
        Ok(())
    }

    /// Checks that every gold evidence id resolves in `store`.
    pub fn validate_evidence(&self, store: &PassageStore) -> Result<(), CorpusError> {
        for id in self.gold_evidence_ids.iter().flatten() {
            if !store.contains(id) && !store.has_article(id) {
                return Err(CorpusError::UnresolvedEvidence {
                    question_id: self.question_id.clone(),
                    id: id.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Splits text into sentences ending at `.`, `!` or `?` followed by
/// whitespace or end of input. Whitespace is normalized to single spaces; a
/// trailing fragment without terminal punctuation forms the last sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    for word in text.split_whitespace() {
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(word);
        if word.ends_with(['.', '!', '?']) {
            sentences.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    sentences
}

/// Cuts an article into non-overlapping windows of `window_size` sentences.
pub fn window_split(article: &Article, window_size: NonZeroUsize) -> Vec<Passage> {
    let sentences = split_sentences(&article.text);
    sentences
        .chunks(window_size.get())
        .enumerate()
        .map(|(index, window)| Passage {
            id: Passage::window_id(&article.id, index),
            article_id: article.id.clone(),
            title: article.title.clone(),
            text: window.join(" "),
            window_index: index,
        })
        .collect()
}

/// Windows every article of a corpus.
pub fn window_corpus(articles: &[Article], window_size: NonZeroUsize) -> Vec<Passage> {
    articles
        .iter()
        .flat_map(|a| window_split(a, window_size))
        .collect()
}

/// One passage per article, without windowing (paragraph-level corpora).
pub fn articles_as_passages(articles: &[Article]) -> Vec<Passage> {
    articles
        .iter()
        .map(|a| Passage {
            id: a.id.clone(),
            article_id: a.id.clone(),
            title: a.title.clone(),
            text: a.text.clone(),
            window_index: 0,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    ArticleJsonl,
    PassageJsonl,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusRecords {
    Articles(Vec<Article>),
    Passages(Vec<Passage>),
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<CorpusRecords, CorpusError> {
    match format {
        CorpusFormat::ArticleJsonl => load_articles(path).map(CorpusRecords::Articles),
        CorpusFormat::PassageJsonl => load_passages(path).map(CorpusRecords::Passages),
    }
}

pub fn load_articles(path: &Path) -> Result<Vec<Article>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in JsonlReader::open(path)? {
        let record = record?;
        let line = record.line;
        let id = record.required_str("id")?;
        let title = record.required_str("title")?;
        let text = record.required_str("contents")?;
        if id.is_empty() {
            return Err(CorpusError::Invalid { line, message: "id must be non-empty".into() });
        }
        if text.is_empty() && title.is_empty() {
            return Err(CorpusError::Invalid {
                line,
                message: format!("article `{id}` has neither title nor contents"),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId { line, id });
        }
        out.push(Article { id, title, text });
    }
    Ok(out)
}

pub fn load_passages(path: &Path) -> Result<Vec<Passage>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in JsonlReader::open(path)? {
        let record = record?;
        let line = record.line;
        let id = record.required_str("id")?;
        let title = record.required_str("title")?;
        let text = record.required_str("contents")?;
        if id.is_empty() {
            return Err(CorpusError::Invalid { line, message: "id must be non-empty".into() });
        }
        let (default_article, default_window) = match id.rsplit_once('#') {
            Some((article, window)) => (article.to_string(), window.parse().unwrap_or(0)),
            None => (id.clone(), 0),
        };
        let article_id = record.optional_str("article_id")?.unwrap_or(default_article);
        let window_index = record.optional_usize("window_index")?.unwrap_or(default_window);
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId { line, id });
        }
        out.push(Passage { id, article_id, title, text, window_index });
    }
    Ok(out)
}

pub fn load_qa_instances(path: &Path) -> Result<Vec<QaInstance>, CorpusError> {
    const REQUIRED: [&str; 4] = ["question_id", "question", "gold_answers", "answer_type"];
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in JsonlReader::open(path)? {
        let record = record?;
        let line = record.line;
        for field in REQUIRED {
            record.require(field)?;
        }
        let instance: QaInstance = record.deserialize()?;
        instance
            .check()
            .map_err(|message| CorpusError::Invalid { line, message })?;
        if !seen.insert(instance.question_id.clone()) {
            return Err(CorpusError::DuplicateId { line, id: instance.question_id });
        }
        out.push(instance);
    }
    Ok(out)
}
