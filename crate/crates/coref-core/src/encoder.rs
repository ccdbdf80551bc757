//! Deterministic trainable toy encoder.
//!
//! Two layers: an embedding lookup over a hashed open vocabulary and a
//! 3-token window mixer with a tanh nonlinearity. Context never crosses
//! segment boundaries, which makes batched encoding bit-identical to
//! per-document encoding regardless of how segments are grouped.

use rand::Rng;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use crate::domain::Document;
use crate::linalg::Matrix;
use crate::tokenizer::token_id;

pub const INIT_SCALE: f64 = 0.1;

/// Trainable encoder state: `vocab_size × dim` embeddings plus the
/// window-mixer weights (`dim × 3·dim`) and bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub vocab_size: usize,
    pub dim: usize,
    pub embedding: Matrix,
    pub mix_weights: Matrix,
    pub mix_bias: Vec<f64>,
}

/// A contiguous ≤ max_length slice of a document's tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub doc_id: String,
    pub segment_index: usize,
    pub token_ids: Vec<usize>,
    pub is_leftover: bool,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Initialize encoder parameters from xoshiro256** seeded with `seed`;
/// entries uniform in [-0.1, 0.1]. Same seed, same bits.
pub fn init_encoder(seed: u64, vocab_size: usize, dim: usize) -> EncoderParams {
    assert!(vocab_size > 0 && dim > 0);
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut next = move || rng.random::<f64>() * 2.0 * INIT_SCALE - INIT_SCALE;
    EncoderParams {
        vocab_size,
        dim,
        embedding: Matrix::from_fn(vocab_size, dim, &mut next),
        mix_weights: Matrix::from_fn(dim, 3 * dim, &mut next),
        mix_bias: (0..dim).map(|_| next()).collect(),
    }
}

/// Split a document into ⌊T/M⌋ full segments of length `max_length`
/// followed by one leftover segment of the remaining `T mod M` tokens.
/// A document of exactly M tokens yields one full segment; an empty
/// document yields no segments.
pub fn segment_document(doc: &Document, max_length: usize, vocab_size: usize) -> Vec<Segment> {
    assert!(max_length >= 1);
    let ids: Vec<usize> = doc.tokens.iter().map(|t| token_id(t, vocab_size)).collect();
    let mut segments = Vec::new();
    for (i, chunk) in ids.chunks(max_length).enumerate() {
        segments.push(Segment {
            doc_id: doc.doc_id.clone(),
            segment_index: i,
            token_ids: chunk.to_vec(),
            is_leftover: chunk.len() < max_length,
        });
    }
    segments
}

impl EncoderParams {
    /// Encode one segment: `h_i = tanh(W · [e_{i-1}; e_i; e_{i+1}] + b)`
    /// with zero vectors beyond the segment boundaries. Pure function of
    /// (params, token_ids).
    pub fn encode_segment(&self, segment: &Segment) -> Vec<Vec<f64>> {
        self.encode_ids(&segment.token_ids)
    }

    pub fn encode_ids(&self, token_ids: &[usize]) -> Vec<Vec<f64>> {
        let d = self.dim;
        let n = token_ids.len();
        let mut out = Vec::with_capacity(n);
        let mut window = vec![0.0; 3 * d];
        for i in 0..n {
            window.iter_mut().for_each(|w| *w = 0.0);
            if i > 0 {
                window[..d].copy_from_slice(self.embedding.row(token_ids[i - 1]));
            }
            window[d..2 * d].copy_from_slice(self.embedding.row(token_ids[i]));
            if i + 1 < n {
                window[2 * d..].copy_from_slice(self.embedding.row(token_ids[i + 1]));
            }
            let mut h = self.mix_weights.matvec(&window);
            for (hj, bj) in h.iter_mut().zip(&self.mix_bias) {
                *hj = (*hj + bj).tanh();
            }
            out.push(h);
        }
        out
    }

    /// Encode a whole document segment by segment and concatenate.
    pub fn encode_document(&self, doc: &Document, max_length: usize) -> Vec<Vec<f64>> {
        segment_document(doc, max_length, self.vocab_size)
            .iter()
            .flat_map(|seg| self.encode_segment(seg))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.embedding.is_finite()
            && self.mix_weights.is_finite()
            && self.mix_bias.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::tokenize;

    fn doc_of_len(n: usize) -> Document {
        let text: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        tokenize("d", &text.join(" "))
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_encoder(1, 16, 4);
        let b = init_encoder(1, 16, 4);
        assert_eq!(a, b);
        let c = init_encoder(2, 16, 4);
        assert_ne!(a.embedding.get(0, 0), c.embedding.get(0, 0));
        let tiny = init_encoder(1, 1, 1);
        let v = tiny.embedding.get(0, 0);
        assert!((-0.1..=0.1).contains(&v));
    }

    #[test]
    fn segmenting_600_by_512_gives_full_plus_88_leftover() {
        let segs = segment_document(&doc_of_len(600), 512, 64);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].len(), 512);
        assert!(!segs[0].is_leftover);
        assert_eq!(segs[1].len(), 88);
        assert!(segs[1].is_leftover);
    }

    #[test]
    fn exact_fit_has_no_leftover() {
        let segs = segment_document(&doc_of_len(512), 512, 64);
        assert_eq!(segs.len(), 1);
        assert!(!segs[0].is_leftover);
    }

    #[test]
    fn short_doc_is_one_leftover_segment() {
        let segs = segment_document(&doc_of_len(5), 512, 64);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].len(), 5);
        assert!(segs[0].is_leftover);
    }

    #[test]
    fn empty_doc_has_no_segments() {
        assert!(segment_document(&doc_of_len(0), 512, 64).is_empty());
    }

    #[test]
    fn segments_cover_document_exactly() {
        let doc = doc_of_len(23);
        let segs = segment_document(&doc, 7, 64);
        let rejoined: Vec<usize> = segs.iter().flat_map(|s| s.token_ids.clone()).collect();
        let direct: Vec<usize> = doc.tokens.iter().map(|t| token_id(t, 64)).collect();
        assert_eq!(rejoined, direct);
    }

    #[test]
    fn zero_mixer_gives_zero_outputs() {
        let mut p = init_encoder(3, 8, 4);
        p.mix_weights = Matrix::zeros(4, 12);
        p.mix_bias = vec![0.0; 4];
        let seg = Segment {
            doc_id: "d".into(),
            segment_index: 0,
            token_ids: vec![1, 2, 3],
            is_leftover: true,
        };
        let h = p.encode_segment(&seg);
        assert!(h.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn length_one_segment_uses_zero_context() {
        let p = init_encoder(3, 8, 4);
        let d = 4;
        let seg = Segment {
            doc_id: "d".into(),
            segment_index: 0,
            token_ids: vec![5],
            is_leftover: true,
        };
        let h = p.encode_segment(&seg);
        let mut window = vec![0.0; 3 * d];
        window[d..2 * d].copy_from_slice(p.embedding.row(5));
        let mut expect = p.mix_weights.matvec(&window);
        for (e, b) in expect.iter_mut().zip(&p.mix_bias) {
            *e = (*e + b).tanh();
        }
        assert_eq!(h[0], expect);
    }

    #[test]
    fn permuting_far_tokens_only_changes_local_neighborhood() {
        let p = init_encoder(7, 64, 8);
        let ids: Vec<usize> = (0..20).collect();
        let mut swapped = ids.clone();
        swapped.swap(3, 15);
        let h_a = p.encode_ids(&ids);
        let h_b = p.encode_ids(&swapped);
        for i in 0..20 {
            let near = [2, 3, 4, 14, 15, 16].contains(&i);
            if near {
                assert_ne!(h_a[i], h_b[i], "position {i} should change");
            } else {
                assert_eq!(h_a[i], h_b[i], "position {i} should be untouched");
            }
        }
    }

    #[test]
    fn outputs_bounded_by_tanh_range() {
        let p = init_encoder(9, 32, 8);
        let h = p.encode_ids(&(0..30).collect::<Vec<_>>());
        assert!(h.iter().flatten().all(|v| v.is_finite() && v.abs() <= 1.0));
    }
}
