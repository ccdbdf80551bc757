//! End-to-end prediction: dynamic grouping → batched encoding under the
//! chosen scheme → span scoring and pruning → best-antecedent decoding.
//!
//! Because the encoder is segment-local and reassembly strips every pad
//! position, predictions are bit-identical across schemes, group sizes,
//! and token budgets.

use serde::{Deserialize, Serialize};

use crate::batching::{encode_plan, plan_dynamic_groups, plan_group, Scheme};
use crate::decoder::{build_result, decode_clusters, transitivity_report, TransitivityReport};
use crate::domain::{ClusterSet, CorefResult, Document, Span};
use crate::error::Result;
use crate::model::ModelParams;
use crate::pruner::{enumerate_spans, prune};
use crate::scoring::{ScoredSpans, TokenProjections};

/// Inference-time knobs; model hyperparameters (λ, span width) come from
/// the model file unless overridden here.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictOptions {
    pub max_length: usize,
    pub max_tokens_in_batch: usize,
    pub scheme: Scheme,
    pub lambda: Option<f64>,
    pub max_span_width: Option<usize>,
    pub max_antecedents: Option<usize>,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            max_length: 64,
            max_tokens_in_batch: 10_000,
            scheme: Scheme::Leftover,
            lambda: None,
            max_span_width: None,
            max_antecedents: None,
        }
    }
}

/// Per-document scoring state: the head plus the document's cached
/// token projections.
pub struct DocScorer<'a> {
    params: &'a ModelParams,
    tp: TokenProjections,
}

impl DocScorer<'_> {
    /// Composed link score F(c, q) = f_m(c) + f_m(q) + f_a(c, q).
    pub fn pair(&self, c: Span, q: Span) -> f64 {
        self.params.head.pair_score_cached(&self.tp, Some(c), q)
    }

    pub fn mention(&self, q: Span) -> f64 {
        self.params.head.mention_score_cached(&self.tp, q)
    }
}

/// One decoded document: its kept spans, clusters, and a scorer for
/// further pair-level analysis.
pub struct DocAnalysis<'a> {
    pub pruned: ScoredSpans,
    pub clusters: ClusterSet,
    pub scorer: DocScorer<'a>,
}

/// Score, prune, and decode one document given its encoded token
/// vectors.
pub fn analyze_document<'a>(
    params: &'a ModelParams,
    h: &[Vec<f64>],
    opts: &PredictOptions,
) -> DocAnalysis<'a> {
    let mut cfg = params.prune_config();
    if let Some(l) = opts.lambda {
        cfg.lambda = l;
    }
    if let Some(w) = opts.max_span_width {
        cfg.max_span_width = w;
    }
    cfg.max_antecedents = opts.max_antecedents;

    let tp = params.head.project_tokens(h);
    let spans = enumerate_spans(h.len(), cfg.max_span_width);
    let scores: Vec<f64> = spans
        .iter()
        .map(|&s| params.head.mention_score_cached(&tp, s))
        .collect();
    let pruned = prune(
        &ScoredSpans {
            spans,
            mention_scores: scores,
        },
        h.len(),
        &cfg,
    );
    let scorer = DocScorer { params, tp };
    let clusters = decode_clusters(&pruned, |c, q| scorer.pair(c, q), cfg.max_antecedents);
    DocAnalysis {
        pruned,
        clusters,
        scorer,
    }
}

/// Encode a corpus under the batching scheme and return each document's
/// token vectors, in corpus order.
pub fn encode_corpus(
    params: &ModelParams,
    docs: &[Document],
    opts: &PredictOptions,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let groups = plan_dynamic_groups(docs, opts.max_tokens_in_batch);
    let mut out: Vec<Vec<Vec<f64>>> = vec![Vec::new(); docs.len()];
    for group in groups {
        let refs: Vec<&Document> = group.iter().map(|&i| &docs[i]).collect();
        let lens: Vec<usize> = refs.iter().map(|d| d.n_tokens()).collect();
        let plan = plan_group(&lens, opts.max_length, opts.scheme);
        let encoded = encode_plan(&params.encoder, &refs, &plan)?;
        for (slot, h) in group.into_iter().zip(encoded) {
            out[slot] = h;
        }
    }
    Ok(out)
}

/// Full prediction over a corpus, results in corpus order.
pub fn predict_corpus(
    params: &ModelParams,
    docs: &[Document],
    opts: &PredictOptions,
) -> Result<Vec<CorefResult>> {
    let encoded = encode_corpus(params, docs, opts)?;
    let mut results = Vec::with_capacity(docs.len());
    for (doc, h) in docs.iter().zip(&encoded) {
        let analysis = analyze_document(params, h, opts);
        results.push(build_result(
            doc,
            &analysis.clusters,
            &analysis.pruned,
            |c, q| analysis.scorer.pair(c, q),
        )?);
    }
    Ok(results)
}

/// Decoded token-span clusters only, for evaluation loops.
pub fn predict_cluster_sets(
    params: &ModelParams,
    docs: &[Document],
    opts: &PredictOptions,
) -> Result<Vec<ClusterSet>> {
    let encoded = encode_corpus(params, docs, opts)?;
    Ok(docs
        .iter()
        .zip(&encoded)
        .map(|(_, h)| analyze_document(params, h, opts).clusters)
        .collect())
}

/// Corpus-level transitivity audit of the decoded clusters.
pub fn analyze_transitivity(
    params: &ModelParams,
    docs: &[Document],
    opts: &PredictOptions,
) -> Result<TransitivityReport> {
    let encoded = encode_corpus(params, docs, opts)?;
    let mut total = TransitivityReport::default();
    for h in &encoded {
        let analysis = analyze_document(params, h, opts);
        let report = transitivity_report(&analysis.clusters, |c, q| analysis.scorer.pair(c, q));
        total.merge(&report);
    }
    Ok(total)
}
