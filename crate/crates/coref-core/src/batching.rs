//! Dynamic batching under a token budget and the leftover-batching
//! split, with exact integer padding accounting and lossless
//! reassembly.
//!
//! A group of documents can be laid out two ways:
//!   * vanilla: a B × K_max × M grid where every document occupies
//!     K_max segment slots of M tokens each, padding as needed;
//!   * leftover: one flat unpadded batch of all full segments plus one
//!     small batch of leftover segments padded only to the group's
//!     maximum leftover length.

use serde::{Deserialize, Serialize};

use crate::domain::Document;
use crate::encoder::{segment_document, EncoderParams};
use crate::error::{CoreError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Vanilla,
    Leftover,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Vanilla => write!(f, "vanilla"),
            Scheme::Leftover => write!(f, "leftover"),
        }
    }
}

/// One occupied batch slot: segment `segment` of group document `doc`,
/// holding `len` real tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotRef {
    pub doc: usize,
    pub segment: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PlanLayout {
    /// Per-document rows of exactly `k_max` slots; `None` is an all-pad
    /// slot.
    Vanilla {
        k_max: usize,
        rows: Vec<Vec<Option<SlotRef>>>,
    },
    /// Full segments unpadded, leftover segments padded to `l_max`.
    Leftover {
        full: Vec<SlotRef>,
        leftover: Vec<SlotRef>,
        l_max: usize,
    },
}

/// Slot layout for one document group, with exact padding accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchPlan {
    pub scheme: Scheme,
    pub max_length: usize,
    pub layout: PlanLayout,
    pub real_tokens: u64,
    pub padding_tokens: u64,
}

/// Aggregated padding accounting over a corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaddingReport {
    pub scheme: Scheme,
    pub documents: usize,
    pub real_tokens: u64,
    pub padded_tokens: u64,
    pub padded_fraction: f64,
}

/// Sort documents by token count descending (ties by doc_id) and fill
/// groups greedily until adding a document would exceed the budget.
/// Documents are never split; a single oversized document forms its own
/// group. Returns groups of indices into `docs`.
pub fn plan_dynamic_groups(docs: &[Document], max_tokens_in_batch: usize) -> Vec<Vec<usize>> {
    assert!(max_tokens_in_batch >= 1);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_by(|&a, &b| {
        docs[b]
            .n_tokens()
            .cmp(&docs[a].n_tokens())
            .then_with(|| docs[a].doc_id.cmp(&docs[b].doc_id))
    });
    greedy_groups(&order, |i| docs[i].n_tokens(), max_tokens_in_batch)
}

/// Greedy sequential fill in the given order (no re-sorting).
pub fn greedy_groups(
    order: &[usize],
    len_of: impl Fn(usize) -> usize,
    budget: usize,
) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut current_tokens = 0usize;
    for &i in order {
        let t = len_of(i);
        if !current.is_empty() && current_tokens + t > budget {
            groups.push(std::mem::take(&mut current));
            current_tokens = 0;
        }
        current.push(i);
        current_tokens += t;
    }
    if !current.is_empty() {
        groups.push(current);
    }
    groups
}

fn segment_lens(n_tokens: usize, m: usize) -> Vec<usize> {
    let mut lens = vec![m; n_tokens / m];
    if !n_tokens.is_multiple_of(m) {
        lens.push(n_tokens % m);
    }
    lens
}

/// Vanilla layout: B × K_max × M grid, each document's segments placed
/// in order, remaining slots fully padded.
pub fn plan_vanilla(doc_lens: &[usize], m: usize) -> BatchPlan {
    assert!(m >= 1);
    let per_doc: Vec<Vec<usize>> = doc_lens.iter().map(|&t| segment_lens(t, m)).collect();
    let k_max = per_doc.iter().map(Vec::len).max().unwrap_or(0);
    let mut rows = Vec::with_capacity(doc_lens.len());
    for (doc, segs) in per_doc.iter().enumerate() {
        let mut row: Vec<Option<SlotRef>> = Vec::with_capacity(k_max);
        for (segment, &len) in segs.iter().enumerate() {
            row.push(Some(SlotRef { doc, segment, len }));
        }
        row.resize(k_max, None);
        rows.push(row);
    }
    let real_tokens: u64 = doc_lens.iter().map(|&t| t as u64).sum();
    let slots = (doc_lens.len() * k_max * m) as u64;
    BatchPlan {
        scheme: Scheme::Vanilla,
        max_length: m,
        layout: PlanLayout::Vanilla { k_max, rows },
        real_tokens,
        padding_tokens: slots - real_tokens,
    }
}

/// Leftover layout: all full segments in one unpadded batch; leftover
/// segments padded only to the group's maximum leftover length.
pub fn plan_leftover(doc_lens: &[usize], m: usize) -> BatchPlan {
    assert!(m >= 1);
    let mut full = Vec::new();
    let mut leftover = Vec::new();
    for (doc, &t) in doc_lens.iter().enumerate() {
        let segs = segment_lens(t, m);
        for (segment, &len) in segs.iter().enumerate() {
            let slot = SlotRef { doc, segment, len };
            if len == m {
                full.push(slot);
            } else {
                leftover.push(slot);
            }
        }
    }
    let l_max = leftover.iter().map(|s| s.len).max().unwrap_or(0);
    let padding_tokens: u64 = leftover.iter().map(|s| (l_max - s.len) as u64).sum();
    let real_tokens: u64 = doc_lens.iter().map(|&t| t as u64).sum();
    BatchPlan {
        scheme: Scheme::Leftover,
        max_length: m,
        layout: PlanLayout::Leftover {
            full,
            leftover,
            l_max,
        },
        real_tokens,
        padding_tokens,
    }
}

pub fn plan_group(doc_lens: &[usize], m: usize, scheme: Scheme) -> BatchPlan {
    match scheme {
        Scheme::Vanilla => plan_vanilla(doc_lens, m),
        Scheme::Leftover => plan_leftover(doc_lens, m),
    }
}

/// Aggregate padding over all dynamic groups of a corpus under the
/// chosen scheme.
pub fn padding_report(
    docs: &[Document],
    m: usize,
    max_tokens_in_batch: usize,
    scheme: Scheme,
) -> PaddingReport {
    let mut real = 0u64;
    let mut padded = 0u64;
    for group in plan_dynamic_groups(docs, max_tokens_in_batch) {
        let lens: Vec<usize> = group.iter().map(|&i| docs[i].n_tokens()).collect();
        let plan = plan_group(&lens, m, scheme);
        real += plan.real_tokens;
        padded += plan.padding_tokens;
    }
    let total = real + padded;
    PaddingReport {
        scheme,
        documents: docs.len(),
        real_tokens: real,
        padded_tokens: padded,
        padded_fraction: if total == 0 {
            0.0
        } else {
            padded as f64 / total as f64
        },
    }
}

/// Per-slot encoder outputs, padded to the slot width of their batch.
/// For a vanilla plan, `vanilla` is doc-major (row by row, `k_max`
/// entries per row) and every entry has `max_length` vectors. For a
/// leftover plan, `full` entries have `max_length` vectors and
/// `leftover` entries have `l_max` vectors.
#[derive(Clone, Debug, Default)]
pub struct EncodedBatches {
    pub vanilla: Vec<Vec<Vec<f64>>>,
    pub full: Vec<Vec<Vec<f64>>>,
    pub leftover: Vec<Vec<Vec<f64>>>,
}

/// Drop every PAD position and concatenate each document's segment
/// vectors in order. The output per document has exactly its token
/// count of vectors.
pub fn reassemble(plan: &BatchPlan, encoded: &EncodedBatches) -> Result<Vec<Vec<Vec<f64>>>> {
    let shape_err =
        |msg: &str| CoreError::Contract(format!("encoded batches mismatch plan: {msg}"));
    match &plan.layout {
        PlanLayout::Vanilla { k_max, rows } => {
            if encoded.vanilla.len() != rows.len() * k_max {
                return Err(shape_err("wrong slot count"));
            }
            let mut out: Vec<Vec<Vec<f64>>> = vec![Vec::new(); rows.len()];
            for (r, row) in rows.iter().enumerate() {
                for (k, slot) in row.iter().enumerate() {
                    let grid = &encoded.vanilla[r * k_max + k];
                    if grid.len() != plan.max_length {
                        return Err(shape_err("vanilla slot not padded to max_length"));
                    }
                    if let Some(slot) = slot {
                        out[slot.doc].extend_from_slice(&grid[..slot.len]);
                    }
                }
            }
            Ok(out)
        }
        PlanLayout::Leftover {
            full,
            leftover,
            l_max,
        } => {
            if encoded.full.len() != full.len() || encoded.leftover.len() != leftover.len() {
                return Err(shape_err("wrong slot count"));
            }
            let n_docs = full
                .iter()
                .chain(leftover)
                .map(|s| s.doc + 1)
                .max()
                .unwrap_or(0);
            // segment-ordered gather per document
            let mut per_doc: Vec<Vec<(usize, &[Vec<f64>])>> = vec![Vec::new(); n_docs];
            for (slot, grid) in full.iter().zip(&encoded.full) {
                if grid.len() != plan.max_length {
                    return Err(shape_err("full slot not of max_length"));
                }
                per_doc[slot.doc].push((slot.segment, &grid[..]));
            }
            for (slot, grid) in leftover.iter().zip(&encoded.leftover) {
                if grid.len() != *l_max {
                    return Err(shape_err("leftover slot not padded to l_max"));
                }
                per_doc[slot.doc].push((slot.segment, &grid[..slot.len]));
            }
            let mut out: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n_docs);
            for mut segs in per_doc {
                segs.sort_by_key(|(i, _)| *i);
                let mut doc_vecs = Vec::new();
                for (_, grid) in segs {
                    doc_vecs.extend_from_slice(grid);
                }
                out.push(doc_vecs);
            }
            Ok(out)
        }
    }
}

/// Execute a plan with the toy encoder: encode each slot's real tokens
/// (segment-local context, pads are zero vectors) and reassemble into
/// per-document vector sequences.
pub fn encode_plan(
    params: &EncoderParams,
    group_docs: &[&Document],
    plan: &BatchPlan,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let segments: Vec<Vec<crate::encoder::Segment>> = group_docs
        .iter()
        .map(|d| segment_document(d, plan.max_length, params.vocab_size))
        .collect();
    let pad = |mut grid: Vec<Vec<f64>>, width: usize, dim: usize| {
        grid.resize(width, vec![0.0; dim]);
        grid
    };
    let encode_slot = |slot: &SlotRef, width: usize| -> Result<Vec<Vec<f64>>> {
        let seg = segments
            .get(slot.doc)
            .and_then(|s| s.get(slot.segment))
            .ok_or_else(|| CoreError::Contract("plan slot outside document segments".into()))?;
        if seg.len() != slot.len {
            return Err(CoreError::Contract(
                "plan slot length disagrees with segmentation".into(),
            ));
        }
        Ok(pad(params.encode_segment(seg), width, params.dim))
    };

    let mut encoded = EncodedBatches::default();
    match &plan.layout {
        PlanLayout::Vanilla { k_max: _, rows } => {
            for row in rows {
                for slot in row {
                    match slot {
                        Some(slot) => encoded.vanilla.push(encode_slot(slot, plan.max_length)?),
                        None => encoded
                            .vanilla
                            .push(pad(Vec::new(), plan.max_length, params.dim)),
                    }
                }
            }
        }
        PlanLayout::Leftover {
            full,
            leftover,
            l_max,
        } => {
            for slot in full {
                encoded.full.push(encode_slot(slot, plan.max_length)?);
            }
            for slot in leftover {
                encoded.leftover.push(encode_slot(slot, *l_max)?);
            }
        }
    }
    let mut out = reassemble(plan, &encoded)?;
    out.resize(group_docs.len(), Vec::new());
    Ok(out)
}
