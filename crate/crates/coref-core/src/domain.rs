//! Core data types shared by every stage of the pipeline.
//!
//! Spans are inclusive token intervals internally and end-exclusive
//! character (byte) intervals externally. All types here are immutable
//! after construction and safe to share across threads.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// A candidate mention: an inclusive interval of token indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }
}

/// Antecedent candidate order: `c` precedes `q` iff `c` starts earlier,
/// with ties on the start broken by the end. A strict total order on
/// distinct spans.
pub fn span_precedes(c: Span, q: Span) -> bool {
    c.start < q.start || (c.start == q.start && c.end < q.end)
}

/// Disjoint sets of spans; the unit of prediction and evaluation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub clusters: Vec<Vec<Span>>,
}

impl ClusterSet {
    pub fn new(mut clusters: Vec<Vec<Span>>) -> Self {
        for c in &mut clusters {
            c.sort();
        }
        clusters.sort();
        ClusterSet { clusters }
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// All mention spans across clusters.
    pub fn mentions(&self) -> impl Iterator<Item = Span> + '_ {
        self.clusters.iter().flatten().copied()
    }

    /// Cluster index containing `span`, if any.
    pub fn cluster_of(&self, span: Span) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(&span))
    }

    pub fn validate(&self, n_tokens: usize, allow_singletons: bool) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for cluster in &self.clusters {
            if cluster.len() < 2 && !allow_singletons {
                return Err(CoreError::Contract(
                    "singleton cluster rejected (pass allow_singletons to permit)".into(),
                ));
            }
            for span in cluster {
                if span.start > span.end || span.end >= n_tokens {
                    return Err(CoreError::Contract(format!(
                        "span ({}, {}) out of range for {} tokens",
                        span.start, span.end, n_tokens
                    )));
                }
                if !seen.insert(*span) {
                    return Err(CoreError::Contract(format!(
                        "span ({}, {}) appears in more than one cluster",
                        span.start, span.end
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A tokenized input text with exact character offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub tokens: Vec<String>,
    /// End-exclusive UTF-8 byte offsets into `text`, one per token.
    pub token_char_offsets: Vec<(usize, usize)>,
    pub gold_clusters: Option<ClusterSet>,
}

impl Document {
    pub fn n_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn validate(&self, allow_singletons: bool) -> Result<()> {
        if self.tokens.len() != self.token_char_offsets.len() {
            return Err(CoreError::Contract(format!(
                "doc {}: {} tokens but {} offsets",
                self.doc_id,
                self.tokens.len(),
                self.token_char_offsets.len()
            )));
        }
        let mut prev_end = 0usize;
        for (i, (&(s, e), tok)) in self.token_char_offsets.iter().zip(&self.tokens).enumerate() {
            if s < prev_end && i > 0 {
                return Err(CoreError::Contract(format!(
                    "doc {}: token offsets overlap at token {}",
                    self.doc_id, i
                )));
            }
            if s >= e || e > self.text.len() {
                return Err(CoreError::Contract(format!(
                    "doc {}: bad offset ({}, {}) at token {}",
                    self.doc_id, s, e, i
                )));
            }
            if &self.text[s..e] != tok.as_str() {
                return Err(CoreError::Contract(format!(
                    "doc {}: text[{}..{}] = {:?} does not match token {:?}",
                    self.doc_id,
                    s,
                    e,
                    &self.text[s..e],
                    tok
                )));
            }
            prev_end = e;
        }
        if let Some(gold) = &self.gold_clusters {
            gold.validate(self.tokens.len(), allow_singletons)?;
        }
        Ok(())
    }
}

/// Token span → end-exclusive character span over the original text.
pub fn to_char_span(doc: &Document, s: Span) -> Result<(usize, usize)> {
    if s.end >= doc.token_char_offsets.len() {
        return Err(CoreError::Contract(format!(
            "span ({}, {}) out of range for doc {} with {} tokens",
            s.start,
            s.end,
            doc.doc_id,
            doc.tokens.len()
        )));
    }
    Ok((
        doc.token_char_offsets[s.start].0,
        doc.token_char_offsets[s.end].1,
    ))
}

/// Prediction output for one document: clusters as character spans and
/// as strings, plus the pairwise logits over pruned spans.
#[derive(Clone, Debug)]
pub struct CorefResult {
    pub doc_id: String,
    pub clusters_char: Vec<Vec<(usize, usize)>>,
    pub clusters_text: Vec<Vec<String>>,
    pub clusters_tokens: Vec<Vec<Span>>,
    /// F(c, q) for every ordered pair of pruned spans, keyed by their
    /// character spans with the antecedent first.
    pair_logits: HashMap<((usize, usize), (usize, usize)), f64>,
    /// Character spans of all pruned (candidate) spans.
    pruned_char: Vec<(usize, usize)>,
}

impl CorefResult {
    pub fn new(
        doc_id: String,
        clusters_char: Vec<Vec<(usize, usize)>>,
        clusters_text: Vec<Vec<String>>,
        clusters_tokens: Vec<Vec<Span>>,
        pair_logits: HashMap<((usize, usize), (usize, usize)), f64>,
        pruned_char: Vec<(usize, usize)>,
    ) -> Self {
        CorefResult {
            doc_id,
            clusters_char,
            clusters_text,
            clusters_tokens,
            pair_logits,
            pruned_char,
        }
    }

    /// Pairwise score between two predicted/pruned spans addressed by
    /// character span. Order-insensitive: the earlier span is taken as
    /// the antecedent.
    pub fn get_logit(&self, span_i: (usize, usize), span_j: (usize, usize)) -> Result<f64> {
        for s in [span_i, span_j] {
            if !self.pruned_char.contains(&s) {
                return Err(CoreError::SpanNotFound(s.0, s.1));
            }
        }
        let key = if span_i <= span_j {
            (span_i, span_j)
        } else {
            (span_j, span_i)
        };
        self.pair_logits
            .get(&key)
            .copied()
            .ok_or(CoreError::SpanNotFound(key.1 .0, key.1 .1))
    }

    pub fn pruned_char_spans(&self) -> &[(usize, usize)] {
        &self.pruned_char
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(a: usize, b: usize) -> Span {
        Span::new(a, b)
    }

    #[test]
    fn precedes_disjoint() {
        assert!(span_precedes(s(0, 1), s(3, 4)));
    }

    #[test]
    fn precedes_irreflexive() {
        assert!(!span_precedes(s(2, 5), s(2, 5)));
    }

    #[test]
    fn precedes_tie_on_start_broken_by_end() {
        assert!(span_precedes(s(2, 3), s(2, 5)));
        assert!(!span_precedes(s(2, 5), s(2, 3)));
    }

    #[test]
    fn precedes_is_strict_total_order_on_length_6_doc() {
        // every span pair of a 6-token document
        let mut spans = Vec::new();
        for start in 0..6 {
            for end in start..6 {
                spans.push(s(start, end));
            }
        }
        for &a in &spans {
            assert!(!span_precedes(a, a));
            for &b in &spans {
                if a != b {
                    // antisymmetric and total
                    assert!(span_precedes(a, b) != span_precedes(b, a));
                }
                for &c in &spans {
                    if span_precedes(a, b) && span_precedes(b, c) {
                        assert!(span_precedes(a, c));
                    }
                }
            }
        }
    }

    #[test]
    fn char_span_single_token() {
        let doc = Document {
            doc_id: "d".into(),
            text: "x".into(),
            tokens: vec!["x".into()],
            token_char_offsets: vec![(0, 1)],
            gold_clusters: None,
        };
        assert_eq!(to_char_span(&doc, s(0, 0)).unwrap(), (0, 1));
    }

    #[test]
    fn char_span_out_of_range_errors() {
        let doc = Document {
            doc_id: "d".into(),
            text: "x".into(),
            tokens: vec!["x".into()],
            token_char_offsets: vec![(0, 1)],
            gold_clusters: None,
        };
        assert!(to_char_span(&doc, s(0, 1)).is_err());
    }

    #[test]
    fn singleton_gold_rejected_by_default() {
        let cs = ClusterSet::new(vec![vec![s(0, 0)]]);
        assert!(cs.validate(5, false).is_err());
        assert!(cs.validate(5, true).is_ok());
    }

    #[test]
    fn overlapping_cluster_membership_rejected() {
        let cs = ClusterSet::new(vec![vec![s(0, 0), s(1, 1)], vec![s(0, 0), s(2, 2)]]);
        assert!(cs.validate(5, false).is_err());
    }
}
