//! JSONL corpus and prediction file formats.
//!
//! Corpus record, one document per line:
//! `{"doc_id", "text", "tokens": [..], "token_char_offsets": [[s,e],..],
//!   "clusters": [[[s,e],..],..]}` where cluster spans are inclusive
//! token-index intervals. `tokens`/`token_char_offsets` may be omitted,
//! in which case the text is tokenized on load.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{ClusterSet, CorefResult, Document, Span};
use crate::error::{CoreError, Result};
use crate::tokenizer::tokenize;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_char_offsets: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<Vec<Vec<(usize, usize)>>>,
}

impl CorpusRecord {
    pub fn from_document(doc: &Document) -> Self {
        CorpusRecord {
            doc_id: doc.doc_id.clone(),
            text: doc.text.clone(),
            tokens: Some(doc.tokens.clone()),
            token_char_offsets: Some(doc.token_char_offsets.clone()),
            clusters: doc.gold_clusters.as_ref().map(|cs| {
                cs.clusters
                    .iter()
                    .map(|c| c.iter().map(|s| (s.start, s.end)).collect())
                    .collect()
            }),
        }
    }

    pub fn into_document(self, line: usize, allow_singletons: bool) -> Result<Document> {
        let mut doc = match (self.tokens, self.token_char_offsets) {
            (Some(tokens), Some(offsets)) => Document {
                doc_id: self.doc_id,
                text: self.text,
                tokens,
                token_char_offsets: offsets,
                gold_clusters: None,
            },
            (None, None) => tokenize(&self.doc_id, &self.text),
            _ => {
                return Err(CoreError::format(
                    line,
                    "tokens and token_char_offsets must be given together",
                ))
            }
        };
        if let Some(clusters) = self.clusters {
            doc.gold_clusters = Some(ClusterSet::new(
                clusters
                    .into_iter()
                    .map(|c| c.into_iter().map(|(s, e)| Span::new(s, e)).collect())
                    .collect(),
            ));
        }
        doc.validate(allow_singletons)
            .map_err(|e| CoreError::format(line, e.to_string()))?;
        Ok(doc)
    }
}

pub fn read_corpus(path: &Path, allow_singletons: bool) -> Result<Vec<Document>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord =
            serde_json::from_str(&line).map_err(|e| CoreError::format(line_no, e.to_string()))?;
        docs.push(record.into_document(line_no, allow_singletons)?);
    }
    Ok(docs)
}

pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for doc in docs {
        let record = CorpusRecord::from_document(doc);
        serde_json::to_writer(&mut out, &record)
            .map_err(|e| CoreError::Config(format!("corpus serialization failed: {e}")))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Prediction output record, one document per line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub doc_id: String,
    pub clusters_char: Vec<Vec<(usize, usize)>>,
    pub clusters_text: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters_tokens: Option<Vec<Vec<(usize, usize)>>>,
}

impl PredictionRecord {
    pub fn from_result(result: &CorefResult) -> Self {
        PredictionRecord {
            doc_id: result.doc_id.clone(),
            clusters_char: result.clusters_char.clone(),
            clusters_text: result.clusters_text.clone(),
            clusters_tokens: Some(
                result
                    .clusters_tokens
                    .iter()
                    .map(|c| c.iter().map(|s| (s.start, s.end)).collect())
                    .collect(),
            ),
        }
    }
}

pub fn write_predictions(path: &Path, results: &[CorefResult]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in results {
        serde_json::to_writer(&mut out, &PredictionRecord::from_result(r))
            .map_err(|e| CoreError::Config(format!("prediction serialization failed: {e}")))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line).map_err(|e| CoreError::format(i + 1, e.to_string()))?,
        );
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut doc = tokenize("d0", "Ann saw Ann .");
        doc.gold_clusters = Some(ClusterSet::new(vec![vec![
            Span::new(0, 0),
            Span::new(2, 2),
        ]]));
        write_corpus(&path, std::slice::from_ref(&doc)).unwrap();
        let back = read_corpus(&path, false).unwrap();
        assert_eq!(back, vec![doc]);
    }

    #[test]
    fn raw_text_record_is_tokenized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "{\"doc_id\":\"x\",\"text\":\"We are fast!\"}\n").unwrap();
        let docs = read_corpus(&path, false).unwrap();
        assert_eq!(docs[0].tokens, vec!["We", "are", "fast", "!"]);
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "{\"doc_id\":\"x\",\"text\":\"hi\"}\nnot json\n").unwrap();
        match read_corpus(&path, false) {
            Err(CoreError::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn singleton_cluster_rejected_on_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(
            &path,
            "{\"doc_id\":\"x\",\"text\":\"a b\",\"clusters\":[[[0,0]]]}\n",
        )
        .unwrap();
        assert!(read_corpus(&path, false).is_err());
        assert!(read_corpus(&path, true).is_ok());
    }
}
