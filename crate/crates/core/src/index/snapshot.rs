//! Line-based index snapshot.
//!
//! ```text
//! {"format":"mdqa-bm25-index","version":1,"k1":0.9,"b":0.4,"documents":N,"terms":V}
//! {"id":"<passage id>","length":<tokens>}            N lines, document order
//! {"term":"<term>","postings":[[doc,tf],...]}          V lines, sorted by term
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Bm25Params, IndexError, InvertedIndex, Posting};
use crate::Scalar;

pub const SNAPSHOT_FORMAT: &str = "mdqa-bm25-index";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    k1: f64,
    b: f64,
    documents: usize,
    terms: usize,
}

#[derive(Serialize, Deserialize)]
struct DocLine {
    id: String,
    length: u32,
}

#[derive(Serialize, Deserialize)]
struct TermLine {
    term: String,
    postings: Vec<(u32, u32)>,
}

fn bad(line: usize, message: impl Into<String>) -> IndexError {
    IndexError::Snapshot { line, message: message.into() }
}

impl<S: Scalar> InvertedIndex<S> {
    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let io = |source| IndexError::Io { path: path.display().to_string(), source };
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        let header = Header {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            k1: self.params.k1.to_f64_lossy(),
            b: self.params.b.to_f64_lossy(),
            documents: self.ids.len(),
            terms: self.postings.len(),
        };
        writeln!(out, "{}", json(&header)).map_err(io)?;
        for (id, &length) in self.ids.iter().zip(&self.doc_lengths) {
            writeln!(out, "{}", json(&DocLine { id: id.clone(), length })).map_err(io)?;
        }
        let mut terms: Vec<&String> = self.postings.keys().collect();
        terms.sort();
        for term in terms {
            let postings = self.postings[term].iter().map(|p| (p.doc, p.tf)).collect();
            writeln!(out, "{}", json(&TermLine { term: term.clone(), postings })).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let io = |source| IndexError::Io { path: path.display().to_string(), source };
        let reader = BufReader::new(File::open(path).map_err(io)?);
        let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));

        let (_, first) = lines.next().ok_or_else(|| bad(1, "empty snapshot"))?;
        let header: Header = serde_json::from_str(&first.map_err(io)?).map_err(|e| bad(1, e.to_string()))?;
        if header.format != SNAPSHOT_FORMAT {
            return Err(bad(1, format!("not an index snapshot (format `{}`)", header.format)));
        }
        if header.version != SNAPSHOT_VERSION {
            return Err(bad(1, format!("unsupported snapshot version {} (expected {SNAPSHOT_VERSION})", header.version)));
        }
        let params = Bm25Params::new(S::lit(header.k1), S::lit(header.b))
            .map_err(|e| bad(1, e.to_string()))?;

        let mut ids = Vec::with_capacity(header.documents);
        let mut lookup = HashMap::with_capacity(header.documents);
        let mut doc_lengths = Vec::with_capacity(header.documents);
        for _ in 0..header.documents {
            let (n, line) = lines.next().ok_or_else(|| bad(0, "truncated document section"))?;
            let doc: DocLine = serde_json::from_str(&line.map_err(io)?).map_err(|e| bad(n, e.to_string()))?;
            if lookup.insert(doc.id.clone(), ids.len() as u32).is_some() {
                return Err(bad(n, format!("duplicate passage id `{}`", doc.id)));
            }
            ids.push(doc.id);
            doc_lengths.push(doc.length);
        }

        let mut postings = HashMap::with_capacity(header.terms);
        for _ in 0..header.terms {
            let (n, line) = lines.next().ok_or_else(|| bad(0, "truncated postings section"))?;
            let entry: TermLine = serde_json::from_str(&line.map_err(io)?).map_err(|e| bad(n, e.to_string()))?;
            let mut list = Vec::with_capacity(entry.postings.len());
            let mut last: Option<u32> = None;
            for (doc, tf) in entry.postings {
                if doc as usize >= ids.len() || tf == 0 || last.is_some_and(|l| l >= doc) {
                    return Err(bad(n, format!("invalid posting ({doc}, {tf}) for `{}`", entry.term)));
                }
                last = Some(doc);
                list.push(Posting { doc, tf });
            }
            if postings.insert(entry.term.clone(), list).is_some() {
                return Err(bad(n, format!("duplicate term `{}`", entry.term)));
            }
        }
        if let Some((n, _)) = lines.find(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty())) {
            return Err(bad(n, "trailing data after postings"));
        }
        Ok(Self::from_parts(params, ids, lookup, doc_lengths, postings))
    }
}

fn json<T: Serialize>(record: &T) -> String {
    serde_json::to_string(record).expect("snapshot records serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Passage;

    fn sample() -> InvertedIndex<f64> {
        let ps: Vec<Passage> = ["war ended 1918", "the war", "aide-de-camp appointment"]
            .iter()
            .enumerate()
            .map(|(i, t)| Passage {
                id: format!("x#{i}"),
                article_id: "x".into(),
                title: "X".into(),
                text: t.to_string(),
                window_index: i,
            })
            .collect();
        InvertedIndex::build(&ps, Bm25Params::new(1.2, 0.75).unwrap()).unwrap()
    }

    #[test]
    fn snapshot_round_trip() {
        let idx = sample();
        let f = tempfile::NamedTempFile::new().unwrap();
        idx.save(f.path()).unwrap();
        let back = InvertedIndex::<f64>::load(f.path()).unwrap();
        assert_eq!(back.params(), idx.params());
        assert_eq!(back.avgdl(), idx.avgdl());
        assert_eq!(back.vocabulary_size(), idx.vocabulary_size());
        assert_eq!(back.search("war 1918", 5), idx.search("war 1918", 5));
    }

    #[test]
    fn version_is_checked() {
        let idx = sample();
        let f = tempfile::NamedTempFile::new().unwrap();
        idx.save(f.path()).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap().replacen("\"version\":1", "\"version\":7", 1);
        std::fs::write(f.path(), text).unwrap();
        let err = InvertedIndex::<f64>::load(f.path()).unwrap_err();
        assert!(err.to_string().contains("version 7"), "{err}");
    }

    #[test]
    fn corrupt_postings_rejected() {
        let idx = sample();
        let f = tempfile::NamedTempFile::new().unwrap();
        idx.save(f.path()).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap().replace("[[0,1]]", "[[9,1]]");
        std::fs::write(f.path(), text).unwrap();
        assert!(matches!(InvertedIndex::<f64>::load(f.path()), Err(IndexError::Snapshot { .. })));
    }
}
