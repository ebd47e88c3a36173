//! Text assembly, tokenization, vocabulary construction, and sparse count
//! vectors.
//!
//! The tokenizer lowercases its input and keeps maximal alphanumeric runs of
//! length >= 2; everything else separates tokens. One global vocabulary is
//! built over the training split and frozen, so every document maps to a
//! fixed-dimension count vector.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::records::PaperRecord;

/// Frozen token -> index map. Indices are dense 0..size-1, assigned in
/// ascending lexicographic order of the retained tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    token_to_index: HashMap<String, u32>,
    tokens: Vec<String>,
    max_features: Option<usize>,
    document_count: u64,
}

/// Sparse token-count representation of one document: strictly increasing
/// indices, counts >= 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CountVector {
    pub entries: Vec<(u32, u32)>,
}

impl CountVector {
    pub fn total_count(&self) -> u64 {
        self.entries.iter().map(|(_, c)| u64::from(*c)).sum()
    }

    /// Expand to a dense vector of the vocabulary's dimension.
    pub fn to_dense(&self, dim: usize) -> Vec<f32> {
        let mut out = vec![0.0; dim];
        for &(idx, count) in &self.entries {
            out[idx as usize] = count as f32;
        }
        out
    }
}

/// Concatenate the fields the classifier consumes: title, summary, keywords,
/// joined by single spaces. Empty parts contribute nothing.
pub fn assemble_text(record: &PaperRecord) -> String {
    let mut parts: Vec<&str> = Vec::with_capacity(2 + record.author_keywords.len());
    if !record.paper_title.is_empty() {
        parts.push(&record.paper_title);
    }
    if !record.paper_summary.is_empty() {
        parts.push(&record.paper_summary);
    }
    for kw in &record.author_keywords {
        if !kw.is_empty() {
            parts.push(kw);
        }
    }
    parts.join(" ")
}

/// Lowercase and split into maximal alphanumeric runs, dropping runs of
/// length 1.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in lowered.chars() {
        if ch.is_alphanumeric() {
            current.push(ch);
        } else if !current.is_empty() {
            if current.chars().count() >= 2 {
                tokens.push(std::mem::take(&mut current));
            } else {
                current.clear();
            }
        }
    }
    if current.chars().count() >= 2 {
        tokens.push(current);
    }
    tokens
}

/// Incremental vocabulary builder: feed documents, then freeze.
#[derive(Debug, Default)]
pub struct VocabularyBuilder {
    counts: HashMap<String, u64>,
    document_count: u64,
}

impl VocabularyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_document(&mut self, text: &str) {
        for token in tokenize(text) {
            *self.counts.entry(token).or_insert(0) += 1;
        }
        self.document_count += 1;
    }

    /// Freeze into a [`Vocabulary`]. With `max_features`, the most frequent
    /// tokens are retained (ties broken lexicographically), then indices are
    /// assigned in ascending lexicographic order of the retained set.
    pub fn build(self, max_features: Option<usize>) -> Vocabulary {
        let mut retained: Vec<(String, u64)> = self.counts.into_iter().collect();
        if let Some(cap) = max_features {
            if retained.len() > cap {
                retained.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                retained.truncate(cap);
            }
        }
        let mut tokens: Vec<String> = retained.into_iter().map(|(t, _)| t).collect();
        tokens.sort_unstable();
        let token_to_index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            token_to_index,
            tokens,
            max_features,
            document_count: self.document_count,
        }
    }
}

/// Build a vocabulary from a finite corpus of texts.
pub fn build_vocabulary<I, S>(corpus: I, max_features: Option<usize>) -> Vocabulary
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut builder = VocabularyBuilder::new();
    for text in corpus {
        builder.add_document(text.as_ref());
    }
    builder.build(max_features)
}

impl Vocabulary {
    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn max_features(&self) -> Option<usize> {
        self.max_features
    }

    pub fn document_count(&self) -> u64 {
        self.document_count
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.token_to_index.get(token).copied()
    }

    /// Tokens in index order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// SHA-256 over the token list in index order; checkpoints embed this so
    /// a model can only run against the vocabulary it was trained with.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for token in &self.tokens {
            hasher.update(token.as_bytes());
            hasher.update(b"\n");
        }
        hasher.finalize().into()
    }

    /// Persist as text: a header line, then one token per line in index order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let max = self
            .max_features
            .map_or_else(|| "none".to_string(), |m| m.to_string());
        writeln!(w, "# max_features={max} documents={}", self.document_count)?;
        for token in &self.tokens {
            writeln!(w, "{token}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut lines = BufReader::new(File::open(path)?).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Malformed("vocabulary file is empty".into()))??;
        let (max_features, document_count) = parse_vocab_header(&header)?;
        let mut tokens = Vec::new();
        for line in lines {
            let token = line?;
            if !token.is_empty() {
                tokens.push(token);
            }
        }
        let token_to_index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Vocabulary {
            token_to_index,
            tokens,
            max_features,
            document_count,
        })
    }
}

fn parse_vocab_header(header: &str) -> Result<(Option<usize>, u64)> {
    let body = header
        .strip_prefix('#')
        .ok_or_else(|| Error::Malformed("vocabulary header must start with '#'".into()))?;
    let mut max_features = None;
    let mut documents = 0;
    for part in body.split_whitespace() {
        if let Some(v) = part.strip_prefix("max_features=") {
            if v != "none" {
                max_features = Some(v.parse::<usize>().map_err(|_| {
                    Error::Malformed(format!("bad max_features in vocabulary header: {v}"))
                })?);
            }
        } else if let Some(v) = part.strip_prefix("documents=") {
            documents = v.parse::<u64>().map_err(|_| {
                Error::Malformed(format!("bad document count in vocabulary header: {v}"))
            })?;
        }
    }
    Ok((max_features, documents))
}

/// Count in-vocabulary tokens of one document. Out-of-vocabulary tokens are
/// ignored.
pub fn vectorize(text: &str, vocab: &Vocabulary) -> CountVector {
    let mut counts: HashMap<u32, u32> = HashMap::new();
    for token in tokenize(text) {
        if let Some(idx) = vocab.index_of(&token) {
            *counts.entry(idx).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(u32, u32)> = counts.into_iter().collect();
    entries.sort_unstable_by_key(|(idx, _)| *idx);
    CountVector { entries }
}

/// Assemble and vectorize one record.
pub fn vectorize_record(record: &PaperRecord, vocab: &Vocabulary) -> CountVector {
    vectorize(&assemble_text(record), vocab)
}
