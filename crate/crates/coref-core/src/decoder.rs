//! Best-antecedent decoding into coreference clusters, plus the
//! within-cluster transitivity-violation analysis.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::domain::{to_char_span, ClusterSet, CorefResult, Document, Span};
use crate::error::Result;
use crate::scoring::ScoredSpans;

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let mut ra = self.find(a);
        let mut rb = self.find(b);
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }

    /// Connected components with ≥ 2 members, each sorted, ordered by
    /// first member.
    pub fn components(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut by_root: HashMap<usize, Vec<usize>> = HashMap::new();
        for i in 0..n {
            let r = self.find(i);
            by_root.entry(r).or_default().push(i);
        }
        let mut comps: Vec<Vec<usize>> = by_root.into_values().filter(|c| c.len() >= 2).collect();
        for c in &mut comps {
            c.sort_unstable();
        }
        comps.sort();
        comps
    }
}

/// For each query span (in order), link it to the argmax-scoring
/// preceding pruned span if that score beats the null antecedent's 0;
/// ties go to ε, then to the earlier candidate. Connected components of
/// the links are the clusters; singletons are dropped.
pub fn decode_clusters(
    pruned: &ScoredSpans,
    score: impl Fn(Span, Span) -> f64,
    max_antecedents: Option<usize>,
) -> ClusterSet {
    let spans = &pruned.spans;
    let mut uf = UnionFind::new(spans.len());
    for (j, &q) in spans.iter().enumerate() {
        let first = match max_antecedents {
            Some(cap) => j.saturating_sub(cap),
            None => 0,
        };
        let mut best: Option<(usize, f64)> = None; // ε is (None, 0.0)
        for (i, &c) in spans.iter().enumerate().take(j).skip(first) {
            let s = score(c, q);
            let beats = match best {
                None => s > 0.0,
                Some((_, b)) => s > b,
            };
            if beats {
                best = Some((i, s));
            }
        }
        if let Some((i, _)) = best {
            uf.union(i, j);
        }
    }
    ClusterSet::new(
        uf.components()
            .into_iter()
            .map(|c| c.into_iter().map(|i| spans[i]).collect())
            .collect(),
    )
}

/// Counts of negative (≤ 0) pairwise scores between mentions that ended
/// up in the same cluster.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitivityReport {
    pub clusters_examined: usize,
    pub within_cluster_pairs: u64,
    pub negative_pairs: u64,
    pub negative_fraction: f64,
}

impl TransitivityReport {
    pub fn merge(&mut self, other: &TransitivityReport) {
        self.clusters_examined += other.clusters_examined;
        self.within_cluster_pairs += other.within_cluster_pairs;
        self.negative_pairs += other.negative_pairs;
        self.negative_fraction = if self.within_cluster_pairs == 0 {
            0.0
        } else {
            self.negative_pairs as f64 / self.within_cluster_pairs as f64
        };
    }
}

/// Over every ordered within-cluster pair (c, q) with c preceding q,
/// count pairs whose score F(c, q) is not strictly positive.
pub fn transitivity_report(
    clusters: &ClusterSet,
    score: impl Fn(Span, Span) -> f64,
) -> TransitivityReport {
    let mut pairs = 0u64;
    let mut negative = 0u64;
    for cluster in &clusters.clusters {
        for (i, &c) in cluster.iter().enumerate() {
            for &q in &cluster[i + 1..] {
                pairs += 1;
                if score(c, q) <= 0.0 {
                    negative += 1;
                }
            }
        }
    }
    TransitivityReport {
        clusters_examined: clusters.clusters.len(),
        within_cluster_pairs: pairs,
        negative_pairs: negative,
        negative_fraction: if pairs == 0 {
            0.0
        } else {
            negative as f64 / pairs as f64
        },
    }
}

/// Convert decoded token-span clusters into the external result form:
/// character spans, strings, and a pairwise-logit lookup over the
/// pruned spans.
pub fn build_result(
    doc: &Document,
    clusters: &ClusterSet,
    pruned: &ScoredSpans,
    score: impl Fn(Span, Span) -> f64,
) -> Result<CorefResult> {
    let mut clusters_char = Vec::with_capacity(clusters.clusters.len());
    let mut clusters_text = Vec::with_capacity(clusters.clusters.len());
    for cluster in &clusters.clusters {
        let mut chars = Vec::with_capacity(cluster.len());
        let mut texts = Vec::with_capacity(cluster.len());
        for &span in cluster {
            let (s, e) = to_char_span(doc, span)?;
            chars.push((s, e));
            texts.push(doc.text[s..e].to_string());
        }
        clusters_char.push(chars);
        clusters_text.push(texts);
    }

    let mut pruned_char = Vec::with_capacity(pruned.spans.len());
    for &span in &pruned.spans {
        pruned_char.push(to_char_span(doc, span)?);
    }
    let mut pair_logits = HashMap::new();
    for (i, &c) in pruned.spans.iter().enumerate() {
        for (j, &q) in pruned.spans.iter().enumerate().skip(i + 1) {
            pair_logits.insert((pruned_char[i], pruned_char[j]), score(c, q));
            let _ = j;
        }
    }

    Ok(CorefResult::new(
        doc.doc_id.clone(),
        clusters_char,
        clusters_text,
        clusters.clusters.clone(),
        pair_logits,
        pruned_char,
    ))
}
