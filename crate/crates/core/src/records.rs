//! Chunked ingestion of line-delimited paper-metadata files.
//!
//! Input files carry one JSON object per line with the upstream column names
//! (`eid`, `paper_title`, `paper_summary`, `author_keyword_json`, ...). Rows
//! are coerced into [`PaperRecord`]s: missing summaries become empty strings,
//! missing keyword lists become empty lists, numeric fields are parsed or
//! defaulted. Unknown fields are kept verbatim and re-emitted on write.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// One scholarly paper's metadata row.
#[derive(Debug, Clone, PartialEq)]
pub struct PaperRecord {
    pub eid: i64,
    pub paper_title: String,
    pub source_title: String,
    /// Abstract text; empty when the source row had none.
    pub paper_summary: String,
    /// Author-provided keywords; empty when the source row had none.
    pub author_keywords: Vec<String>,
    /// Publication year; 0 means unknown, otherwise within [1850, 2100].
    pub pub_year: i32,
    pub cited_num: u64,
    pub paper_type: String,
    pub language: String,
    pub authors_names: Vec<String>,
    pub authors_ids: Vec<String>,
    /// Fields the pipeline does not consume, preserved for re-emission.
    pub extra: Map<String, Value>,
}

/// A record together with its binary relevance label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub record: PaperRecord,
    pub is_ai: u8,
}

/// A fixed-size block of rows read from one input file.
#[derive(Debug, Clone)]
pub struct RecordChunk<T> {
    /// 0-based ordinal of this chunk within the file.
    pub index: usize,
    pub records: Vec<T>,
}

pub const DEFAULT_CHUNK_SIZE: usize = 20_000;

const YEAR_MIN: i32 = 1850;
const YEAR_MAX: i32 = 2100;

fn value_to_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Parse a field that holds a list of strings, either as a native JSON array
/// or as a string containing a serialized JSON array (the upstream storage
/// form). Missing, null, or empty values yield an empty list.
fn coerce_string_list(raw: Option<&Value>, field: &str) -> Result<Vec<String>> {
    match raw {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => Ok(items
            .iter()
            .filter(|v| !v.is_null())
            .map(value_to_string)
            .collect()),
        Some(Value::String(s)) => {
            let s = s.trim();
            if s.is_empty() {
                return Ok(Vec::new());
            }
            let parsed: Value = serde_json::from_str(s)
                .map_err(|_| Error::Malformed(format!("{field}: not a JSON list")))?;
            match parsed {
                Value::Array(items) => Ok(items
                    .iter()
                    .filter(|v| !v.is_null())
                    .map(value_to_string)
                    .collect()),
                _ => Err(Error::Malformed(format!("{field}: not a JSON list"))),
            }
        }
        Some(_) => Err(Error::Malformed(format!("{field}: not a JSON list"))),
    }
}

/// Parse an integer that may arrive as a JSON number or a numeric string.
fn coerce_integer(raw: Option<&Value>) -> Option<i64> {
    match raw {
        Some(Value::Number(n)) => n.as_i64().or_else(|| n.as_f64().map(|f| f as i64)),
        Some(Value::String(s)) => s.trim().parse::<i64>().ok(),
        _ => None,
    }
}

fn coerce_text(raw: Option<&Value>) -> String {
    match raw {
        None | Some(Value::Null) => String::new(),
        Some(v) => value_to_string(v),
    }
}

const KNOWN_FIELDS: &[&str] = &[
    "eid",
    "paper_title",
    "source_title",
    "paper_summary",
    "author_keyword_json",
    "pub_year",
    "cited_num",
    "paper_type",
    "language",
    "paper_authors_name",
    "paper_authors_id",
];

/// Coerce a parsed key-value row into a validated [`PaperRecord`].
///
/// Requires `eid`; everything else is defaulted when absent. Out-of-range or
/// unparseable `pub_year` values collapse to 0 (unknown). Idempotent: coercing
/// an already-coerced record's emitted form changes nothing.
pub fn coerce_record(raw: &Map<String, Value>) -> Result<PaperRecord> {
    let eid = match raw.get("eid") {
        None | Some(Value::Null) => return Err(Error::Malformed("missing eid".into())),
        other => {
            coerce_integer(other).ok_or_else(|| Error::Malformed("non-integer eid".into()))?
        }
    };

    let pub_year = match coerce_integer(raw.get("pub_year")) {
        Some(y) if (i64::from(YEAR_MIN)..=i64::from(YEAR_MAX)).contains(&y) => y as i32,
        _ => 0,
    };
    let cited_num = coerce_integer(raw.get("cited_num"))
        .filter(|n| *n >= 0)
        .unwrap_or(0) as u64;

    let extra: Map<String, Value> = raw
        .iter()
        .filter(|(k, _)| !KNOWN_FIELDS.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();

    Ok(PaperRecord {
        eid,
        paper_title: coerce_text(raw.get("paper_title")),
        source_title: coerce_text(raw.get("source_title")),
        paper_summary: coerce_text(raw.get("paper_summary")),
        author_keywords: coerce_string_list(raw.get("author_keyword_json"), "author_keyword_json")?,
        pub_year,
        cited_num,
        paper_type: coerce_text(raw.get("paper_type")),
        language: coerce_text(raw.get("language")),
        authors_names: coerce_string_list(raw.get("paper_authors_name"), "paper_authors_name")?,
        authors_ids: coerce_string_list(raw.get("paper_authors_id"), "paper_authors_id")?,
        extra,
    })
}

/// Pair a record with a binary label.
pub fn attach_label(record: PaperRecord, label: i64) -> Result<LabeledExample> {
    match label {
        0 | 1 => Ok(LabeledExample {
            record,
            is_ai: label as u8,
        }),
        other => Err(Error::Domain(format!(
            "is_ai must be 0 or 1, got {other}"
        ))),
    }
}

impl PaperRecord {
    /// Emit the record as a JSON object using the upstream field names.
    /// Coerced fields come first in a fixed order, then preserved extras.
    pub fn to_json(&self) -> Map<String, Value> {
        let mut out = Map::new();
        out.insert("eid".into(), Value::from(self.eid));
        out.insert("paper_title".into(), Value::from(self.paper_title.clone()));
        out.insert(
            "source_title".into(),
            Value::from(self.source_title.clone()),
        );
        out.insert(
            "paper_summary".into(),
            Value::from(self.paper_summary.clone()),
        );
        out.insert(
            "author_keyword_json".into(),
            Value::from(self.author_keywords.clone()),
        );
        out.insert("pub_year".into(), Value::from(self.pub_year));
        out.insert("cited_num".into(), Value::from(self.cited_num));
        out.insert("paper_type".into(), Value::from(self.paper_type.clone()));
        out.insert("language".into(), Value::from(self.language.clone()));
        out.insert(
            "paper_authors_name".into(),
            Value::from(self.authors_names.clone()),
        );
        out.insert(
            "paper_authors_id".into(),
            Value::from(self.authors_ids.clone()),
        );
        for (k, v) in &self.extra {
            out.insert(k.clone(), v.clone());
        }
        out
    }
}

impl LabeledExample {
    pub fn to_json(&self) -> Map<String, Value> {
        let mut out = self.record.to_json();
        out.insert("is_ai".into(), Value::from(self.is_ai));
        out
    }
}

/// Row-level decoding used by the chunk reader.
pub trait FromRow: Sized {
    fn from_row(raw: &Map<String, Value>) -> Result<Self>;
}

impl FromRow for PaperRecord {
    fn from_row(raw: &Map<String, Value>) -> Result<Self> {
        coerce_record(raw)
    }
}

impl FromRow for LabeledExample {
    fn from_row(raw: &Map<String, Value>) -> Result<Self> {
        let label = coerce_integer(raw.get("is_ai"))
            .ok_or_else(|| Error::Malformed("missing or non-integer is_ai".into()))?;
        attach_label(coerce_record(raw)?, label).map_err(|e| match e {
            Error::Domain(msg) => Error::Malformed(msg),
            other => other,
        })
    }
}

/// Streaming chunk reader over a line-delimited record file.
///
/// Holds at most one chunk of decoded records in memory. Every chunk except
/// possibly the last has exactly `chunk_size` records.
pub struct ChunkReader<T> {
    lines: std::io::Lines<BufReader<File>>,
    chunk_size: usize,
    next_index: usize,
    line_no: usize,
    done: bool,
    _marker: std::marker::PhantomData<T>,
}

impl<T: FromRow> ChunkReader<T> {
    pub fn open(path: &Path, chunk_size: usize) -> Result<Self> {
        assert!(chunk_size >= 1, "chunk_size must be at least 1");
        let file = File::open(path)?;
        Ok(ChunkReader {
            lines: BufReader::new(file).lines(),
            chunk_size,
            next_index: 0,
            line_no: 0,
            done: false,
            _marker: std::marker::PhantomData,
        })
    }
}

/// Decode one raw line into a row; whitespace-only lines yield `None`.
pub fn parse_row<T: FromRow>(line: &str, line_no: usize) -> Result<Option<T>> {
    if line.trim().is_empty() {
        return Ok(None);
    }
    let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: format!("invalid JSON: {e}"),
    })?;
    let raw = value.as_object().ok_or_else(|| Error::Parse {
        line: line_no,
        message: "row is not a JSON object".into(),
    })?;
    T::from_row(raw).map(Some).map_err(|e| e.at_line(line_no))
}

impl<T: FromRow> Iterator for ChunkReader<T> {
    type Item = Result<RecordChunk<T>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut records = Vec::with_capacity(self.chunk_size);
        while records.len() < self.chunk_size {
            match self.lines.next() {
                None => {
                    self.done = true;
                    break;
                }
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
                Some(Ok(line)) => {
                    self.line_no += 1;
                    match parse_row::<T>(&line, self.line_no) {
                        Ok(Some(row)) => records.push(row),
                        Ok(None) => {}
                        Err(e) => {
                            self.done = true;
                            return Some(Err(e));
                        }
                    }
                }
            }
        }
        if records.is_empty() {
            return None;
        }
        let chunk = RecordChunk {
            index: self.next_index,
            records,
        };
        self.next_index += 1;
        Some(Ok(chunk))
    }
}

/// Read a record file in fixed-size chunks.
pub fn read_chunks(path: &Path, chunk_size: usize) -> Result<ChunkReader<PaperRecord>> {
    ChunkReader::open(path, chunk_size)
}

/// Read a labeled record file (rows must carry `is_ai`) in fixed-size chunks.
pub fn read_labeled_chunks(path: &Path, chunk_size: usize) -> Result<ChunkReader<LabeledExample>> {
    ChunkReader::open(path, chunk_size)
}

/// Write records as line-delimited JSON.
pub fn write_records<'a, W, I>(writer: &mut W, records: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a PaperRecord>,
{
    for record in records {
        serde_json::to_writer(&mut *writer, &Value::Object(record.to_json()))
            .map_err(|e| Error::Malformed(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
