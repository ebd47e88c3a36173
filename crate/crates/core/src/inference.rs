//! Bounded-memory bulk classification: stream records in chunks, score each
//! row in eval mode, and append `is_ai` and `p_ai` to the emitted rows.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::nn::{model_eval_logits, LstmClassifier};
use crate::records::{parse_row, PaperRecord, DEFAULT_CHUNK_SIZE};
use crate::vectorizer::{vectorize_record, CountVector, Vocabulary};

/// One scored record.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub eid: i64,
    pub is_ai: u8,
    pub p_ai: f32,
}

/// A model paired with the vocabulary it was trained on; construction
/// verifies the checkpoint's vocabulary hash.
pub struct Classifier {
    model: LstmClassifier<f32>,
    vocab: Vocabulary,
}

/// Rows scored per forward call inside a chunk.
const SCORE_BATCH: usize = 64;

impl Classifier {
    pub fn new(model: LstmClassifier<f32>, vocab: Vocabulary) -> Result<Self> {
        model.verify_vocabulary(&vocab)?;
        Ok(Classifier { model, vocab })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn model(&self) -> &LstmClassifier<f32> {
        &self.model
    }

    fn decide(logits: &[f32]) -> (u8, f32) {
        // p_ai from a stable two-class softmax; ties go to the negative class
        let (z0, z1) = (logits[0], logits[1]);
        let max = z0.max(z1);
        let e0 = (z0 - max).exp();
        let e1 = (z1 - max).exp();
        let p_ai = e1 / (e0 + e1);
        (u8::from(z1 > z0), p_ai)
    }

    /// Score a batch of pre-vectorized documents.
    pub fn predict_vectors(&self, vectors: &[CountVector]) -> Result<Vec<(u8, f32)>> {
        let logits = model_eval_logits(vectors, &self.model)?;
        Ok((0..vectors.len())
            .map(|b| Self::decide(logits.row(b)))
            .collect())
    }

    /// Score one record.
    pub fn predict_one(&self, record: &PaperRecord) -> Result<Prediction> {
        let vector = vectorize_record(record, &self.vocab);
        let scored = self.predict_vectors(std::slice::from_ref(&vector))?;
        let (is_ai, p_ai) = scored[0];
        Ok(Prediction {
            eid: record.eid,
            is_ai,
            p_ai,
        })
    }
}

/// Counts reported at the end of a bulk run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamSummary {
    pub total: u64,
    pub positives: u64,
    pub skipped: u64,
}

impl StreamSummary {
    pub fn to_json_line(&self) -> String {
        format!(
            r#"{{"total": {}, "positives": {}, "skipped": {}}}"#,
            self.total, self.positives, self.skipped
        )
    }
}

/// Classify every row of `input` into `output`, preserving input order.
///
/// Rows are processed one chunk at a time, so peak memory is set by
/// `chunk_size`, not the file size. Rows that fail to parse are logged with
/// their line number, counted, and skipped; the run continues.
pub fn classify_stream(
    input: &Path,
    output: &Path,
    classifier: &Classifier,
    chunk_size: usize,
) -> Result<StreamSummary> {
    let chunk_size = if chunk_size == 0 {
        DEFAULT_CHUNK_SIZE
    } else {
        chunk_size
    };
    let reader = BufReader::new(std::fs::File::open(input)?);
    let mut writer = BufWriter::new(std::fs::File::create(output)?);
    let mut summary = StreamSummary::default();

    let mut chunk: Vec<PaperRecord> = Vec::with_capacity(chunk_size);
    let mut line_no = 0usize;
    for line in reader.lines() {
        let line = line?;
        line_no += 1;
        match parse_row::<PaperRecord>(&line, line_no) {
            Ok(Some(record)) => chunk.push(record),
            Ok(None) => {}
            Err(e) => {
                log::warn!("skipping row: {e}");
                summary.skipped += 1;
            }
        }
        if chunk.len() == chunk_size {
            classify_chunk(&chunk, classifier, &mut writer, &mut summary)?;
            chunk.clear();
        }
    }
    if !chunk.is_empty() {
        classify_chunk(&chunk, classifier, &mut writer, &mut summary)?;
    }
    writer.flush()?;
    Ok(summary)
}

fn classify_chunk<W: Write>(
    records: &[PaperRecord],
    classifier: &Classifier,
    writer: &mut W,
    summary: &mut StreamSummary,
) -> Result<()> {
    // score_batch-sized slices in parallel; collect keeps slice order, and
    // rows are scored independently, so output bytes do not depend on the
    // worker count
    let scored: Vec<Result<Vec<(u8, f32)>>> = records
        .par_chunks(SCORE_BATCH)
        .map(|slice| {
            let vectors: Vec<CountVector> = slice
                .iter()
                .map(|r| vectorize_record(r, &classifier.vocab))
                .collect();
            classifier.predict_vectors(&vectors)
        })
        .collect();

    let mut results = Vec::with_capacity(records.len());
    for batch in scored {
        results.extend(batch?);
    }
    for (record, (is_ai, p_ai)) in records.iter().zip(results) {
        let mut row = record.to_json();
        row.insert("is_ai".into(), Value::from(is_ai));
        row.insert("p_ai".into(), Value::from(p_ai));
        serde_json::to_writer(&mut *writer, &Value::Object(row))
            .map_err(|e| Error::Malformed(e.to_string()))?;
        writer.write_all(b"\n")?;
        summary.total += 1;
        summary.positives += u64::from(is_ai);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorizer::build_vocabulary;
    use std::io::Write as _;

    fn zero_classifier(bias: [f32; 2]) -> Classifier {
        let vocab = build_vocabulary(["aa bb cc dd"], None);
        let mut model = LstmClassifier::<f32>::zeros(vocab.size(), 3, 1, 0.5);
        model.fc.bias = bias.to_vec();
        model.vocab_hash = vocab.content_hash();
        Classifier::new(model, vocab).unwrap()
    }

    fn record_with_text(eid: i64, title: &str) -> PaperRecord {
        PaperRecord {
            eid,
            paper_title: title.into(),
            source_title: String::new(),
            paper_summary: String::new(),
            author_keywords: vec![],
            pub_year: 0,
            cited_num: 0,
            paper_type: String::new(),
            language: String::new(),
            authors_names: vec![],
            authors_ids: vec![],
            extra: serde_json::Map::new(),
        }
    }

    #[test]
    fn tie_goes_to_the_negative_class() {
        let classifier = zero_classifier([0.0, 0.0]);
        let p = classifier.predict_one(&record_with_text(1, "aa bb")).unwrap();
        assert_eq!(p.is_ai, 0);
        assert!((p.p_ai - 0.5).abs() < 1e-7);
    }

    #[test]
    fn biased_head_pushes_probability_up() {
        let classifier = zero_classifier([0.0, 5.0]);
        let p = classifier.predict_one(&record_with_text(1, "aa")).unwrap();
        assert_eq!(p.is_ai, 1);
        // scalar softmax oracle: 1 / (1 + e^-5)
        let expected = 1.0 / (1.0 + (-5.0f64).exp());
        assert!((f64::from(p.p_ai) - expected).abs() < 1e-6);
    }

    #[test]
    fn fully_oov_text_scores_like_the_empty_document() {
        let classifier = zero_classifier([0.3, -0.2]);
        let oov = classifier
            .predict_one(&record_with_text(1, "zz qq ww"))
            .unwrap();
        let empty = classifier.predict_one(&record_with_text(2, "")).unwrap();
        assert_eq!(oov.is_ai, empty.is_ai);
        assert_eq!(oov.p_ai.to_bits(), empty.p_ai.to_bits());
    }

    #[test]
    fn vocabulary_hash_mismatch_is_rejected() {
        let vocab = build_vocabulary(["aa bb"], None);
        let model = LstmClassifier::<f32>::zeros(vocab.size(), 3, 1, 0.5);
        // hash left at zeros
        assert!(matches!(
            Classifier::new(model, vocab),
            Err(Error::Incompatible(_))
        ));
    }

    fn write_rows(rows: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for r in rows {
            writeln!(f, "{r}").unwrap();
        }
        f.flush().unwrap();
        f
    }

    #[test]
    fn stream_matches_per_record_prediction_and_skips_bad_rows() {
        let classifier = zero_classifier([0.0, 1.0]);
        let rows = vec![
            r#"{"eid": 1, "paper_title": "aa bb"}"#.to_string(),
            r#"{"eid": 2, "paper_title": "cc"}"#.to_string(),
            r#"{"paper_title": "no eid"}"#.to_string(),
            r#"{"eid": 4, "paper_title": "dd dd"}"#.to_string(),
        ];
        let input = write_rows(&rows);
        let out = tempfile::NamedTempFile::new().unwrap();
        let summary = classify_stream(input.path(), out.path(), &classifier, 2).unwrap();
        assert_eq!(summary, StreamSummary { total: 3, positives: 3, skipped: 1 });

        let text = std::fs::read_to_string(out.path()).unwrap();
        let emitted: Vec<Value> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(emitted.len(), 3);
        let eids: Vec<i64> = emitted.iter().map(|v| v["eid"].as_i64().unwrap()).collect();
        assert_eq!(eids, vec![1, 2, 4]);

        // row i of the stream equals predict_one on row i
        for v in &emitted {
            let record = crate::records::coerce_record(v.as_object().unwrap()).unwrap();
            let one = classifier.predict_one(&record).unwrap();
            assert_eq!(i64::from(v["is_ai"].as_u64().unwrap() as u8), i64::from(one.is_ai));
            assert!((v["p_ai"].as_f64().unwrap() - f64::from(one.p_ai)).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_input_gives_empty_output() {
        let classifier = zero_classifier([0.0, 0.0]);
        let input = write_rows(&[]);
        let out = tempfile::NamedTempFile::new().unwrap();
        let summary = classify_stream(input.path(), out.path(), &classifier, 100).unwrap();
        assert_eq!(summary, StreamSummary::default());
        assert_eq!(std::fs::read_to_string(out.path()).unwrap(), "");
    }

    #[test]
    fn output_is_invariant_to_chunk_size_and_reruns() {
        let classifier = zero_classifier([0.2, 0.9]);
        let rows: Vec<String> = (0..57)
            .map(|i| format!(r#"{{"eid": {i}, "paper_title": "aa bb cc {i}"}}"#))
            .collect();
        let input = write_rows(&rows);
        let mut outputs = Vec::new();
        for chunk_size in [1, 7, 100] {
            let out = tempfile::NamedTempFile::new().unwrap();
            classify_stream(input.path(), out.path(), &classifier, chunk_size).unwrap();
            outputs.push(std::fs::read(out.path()).unwrap());
        }
        assert_eq!(outputs[0], outputs[1]);
        assert_eq!(outputs[1], outputs[2]);
    }
}
