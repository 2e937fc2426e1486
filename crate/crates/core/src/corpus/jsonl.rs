use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use super::CorpusError;

/// Line-numbered reader over a JSON Lines file. Blank lines are skipped.
pub struct JsonlReader {
    lines: Lines<BufReader<File>>,
    line: usize,
}

/// One parsed JSON object together with its 1-based line number.
pub struct Record {
    pub line: usize,
    fields: Map<String, Value>,
}

impl JsonlReader {
    pub fn open(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self { lines: BufReader::new(file).lines(), line: 0 })
    }
}

impl Iterator for JsonlReader {
    type Item = Result<Record, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let raw = self.lines.next()?;
            self.line += 1;
            let line = self.line;
            let raw = match raw {
                Ok(raw) => raw,
                Err(e) => return Some(Err(CorpusError::Malformed { line, message: e.to_string() })),
            };
            if raw.trim().is_empty() {
                continue;
            }
            return Some(match serde_json::from_str::<Value>(&raw) {
                Ok(Value::Object(fields)) => Ok(Record { line, fields }),
                Ok(_) => Err(CorpusError::Malformed { line, message: "expected a JSON object".into() }),
                Err(e) => Err(CorpusError::Malformed { line, message: e.to_string() }),
            });
        }
    }
}

impl Record {
    pub fn require(&self, field: &'static str) -> Result<&Value, CorpusError> {
        match self.fields.get(field) {
            Some(Value::Null) | None => Err(CorpusError::MissingField { line: self.line, field }),
            Some(v) => Ok(v),
        }
    }

    pub fn required_str(&self, field: &'static str) -> Result<String, CorpusError> {
        match self.require(field)? {
            Value::String(s) => Ok(s.clone()),
            _ => Err(CorpusError::Malformed {
                line: self.line,
                message: format!("field `{field}` must be a string"),
            }),
        }
    }

    pub fn optional_str(&self, field: &'static str) -> Result<Option<String>, CorpusError> {
        match self.fields.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(CorpusError::Malformed {
                line: self.line,
                message: format!("field `{field}` must be a string"),
            }),
        }
    }

    pub fn optional_usize(&self, field: &'static str) -> Result<Option<usize>, CorpusError> {
        match self.fields.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v.as_u64().map(|n| Some(n as usize)).ok_or_else(|| CorpusError::Malformed {
                line: self.line,
                message: format!("field `{field}` must be a non-negative integer"),
            }),
        }
    }

    pub fn deserialize<T: DeserializeOwned>(self) -> Result<T, CorpusError> {
        let line = self.line;
        serde_json::from_value(Value::Object(self.fields))
            .map_err(|e| CorpusError::Malformed { line, message: e.to_string() })
    }
}

/// Writes `records` as JSON Lines, replacing `path` atomically.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io { path: path.display().to_string(), source };
    let tmp = path.with_extension("tmp-write");
    {
        let mut out = BufWriter::new(File::create(&tmp).map_err(io_err)?);
        for record in records {
            let line = serde_json::to_string(record)
                .map_err(|e| CorpusError::Malformed { line: 0, message: e.to_string() })?;
            writeln!(out, "{line}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)?;
    }
    std::fs::rename(&tmp, path).map_err(io_err)
}
