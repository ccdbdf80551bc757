//! Exact reverse-mode gradients for the three training losses.
//!
//! The forward pass is: hashed embedding → segment-local window mixer
//! (tanh) → gelu start/end projections → mention and antecedent
//! bilinear scores → per-query softmax against the pinned-at-zero null
//! antecedent. The backward pass here mirrors it by hand; the
//! finite-difference oracle in the test suite checks every parameter.

use std::collections::HashSet;

use crate::domain::{ClusterSet, Document, Span};
use crate::error::{CoreError, Result};
use crate::linalg::{axpy, Matrix};
use crate::model::ModelParams;
use crate::pruner::{enumerate_spans, prune};
use crate::scoring::{distribution_from_scores, gelu_prime, ScoredSpans, TokenProjections};
use crate::tokenizer::token_id;

const LOG_FLOOR: f64 = 1e-300;

/// Teacher-side soft-distillation targets for one document: the
/// teacher's pruned spans (in order) and, for each query, the teacher's
/// pair logits over the preceding pruned spans (ε excluded; its logit
/// is 0 by definition for both models).
#[derive(Clone, Debug, PartialEq)]
pub struct SoftTargets {
    pub spans: Vec<Span>,
    pub logits: Vec<Vec<f64>>,
}

/// Which loss to evaluate and differentiate.
#[derive(Clone, Debug)]
pub enum LossSelector<'a> {
    /// Eq.-style marginal log-likelihood over true antecedents, with the
    /// given clusters as (gold or teacher) labels.
    MarginalNll { gold: &'a ClusterSet },
    /// Binary cross-entropy of σ(f_m) against teacher mention labels
    /// over all enumerated spans.
    MentionBce { mentions: &'a HashSet<Span> },
    /// Soft cross entropy between teacher and student antecedent
    /// distributions under the teacher's pruning.
    SoftDistill { targets: &'a SoftTargets, tau: f64 },
}

/// The per-query targets under marginal-NLL training: indices of the
/// candidates sharing `q`'s cluster, falling back to ε when `q` is
/// unclustered or all its cluster-mates were pruned away.
pub fn gold_antecedents(q: Span, candidates: &[Span], gold: &ClusterSet) -> (Vec<usize>, bool) {
    match gold.cluster_of(q) {
        None => (Vec::new(), true),
        Some(ci) => {
            let cluster = &gold.clusters[ci];
            let idx: Vec<usize> = candidates
                .iter()
                .enumerate()
                .filter(|(_, c)| cluster.contains(c))
                .map(|(i, _)| i)
                .collect();
            if idx.is_empty() {
                (Vec::new(), true)
            } else {
                (idx, false)
            }
        }
    }
}

/// −log Σ_gold P, floored so the loss stays finite for any parameters.
/// `dist` is over candidates ∪ {ε} with ε last.
pub fn marginal_nll_loss(dist: &[f64], gold_indices: &[usize], gold_has_eps: bool) -> f64 {
    let mut s: f64 = gold_indices.iter().map(|&i| dist[i]).sum();
    if gold_has_eps {
        s += dist[dist.len() - 1];
    }
    -s.max(LOG_FLOOR).ln()
}

/// Numerically stable BCE of a logit against a {0,1} label.
pub fn bce_logit(score: f64, label: f64) -> f64 {
    score.max(0.0) - score * label + (-score.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean BCE over enumerated spans; labels are 1 iff the span is a
/// teacher mention.
pub fn mention_bce_loss(scores: &[f64], spans: &[Span], mentions: &HashSet<Span>) -> f64 {
    if spans.is_empty() {
        return 0.0;
    }
    let total: f64 = spans
        .iter()
        .zip(scores)
        .map(|(s, &score)| bce_logit(score, if mentions.contains(s) { 1.0 } else { 0.0 }))
        .sum();
    total / spans.len() as f64
}

/// Soft cross entropy H(softmax(teacher/τ), softmax(student/τ)) for one
/// query; both logit lists cover the identical candidates, ε appended
/// internally at 0.
pub fn soft_distill_loss(teacher_logits: &[f64], student_logits: &[f64], tau: f64) -> Result<f64> {
    if teacher_logits.len() != student_logits.len() {
        return Err(CoreError::Contract(
            "teacher and student candidate lists differ".into(),
        ));
    }
    let pt = distribution_from_scores(&teacher_logits.iter().map(|l| l / tau).collect::<Vec<_>>());
    let ps = distribution_from_scores(&student_logits.iter().map(|l| l / tau).collect::<Vec<_>>());
    Ok(-pt
        .iter()
        .zip(&ps)
        .map(|(t, s)| t * s.max(LOG_FLOOR).ln())
        .sum::<f64>())
}

/// Per-document forward state reused by loss evaluation and backprop.
pub struct DocForward {
    pub ids: Vec<usize>,
    pub seg_bounds: Vec<(usize, usize)>,
    pub h: Vec<Vec<f64>>,
    pub tp: TokenProjections,
}

pub fn forward_document(params: &ModelParams, doc: &Document, max_length: usize) -> DocForward {
    let vocab = params.encoder.vocab_size;
    let ids: Vec<usize> = doc.tokens.iter().map(|t| token_id(t, vocab)).collect();
    let mut seg_bounds = Vec::new();
    let mut h = Vec::with_capacity(ids.len());
    let mut start = 0;
    while start < ids.len() {
        let end = (start + max_length).min(ids.len());
        seg_bounds.push((start, end));
        h.extend(params.encoder.encode_ids(&ids[start..end]));
        start = end;
    }
    let tp = params.head.project_tokens(&h);
    DocForward {
        ids,
        seg_bounds,
        h,
        tp,
    }
}

/// Backward accumulator: collects per-token projection gradients from
/// span- and pair-level score gradients, then pushes them through the
/// projections and the encoder in `finish`.
struct Backward<'a> {
    params: &'a ModelParams,
    fwd: &'a DocForward,
    d_ms: Vec<Vec<f64>>,
    d_me: Vec<Vec<f64>>,
    d_as: Vec<Vec<f64>>,
    d_ae: Vec<Vec<f64>>,
    // caches: B_m · m_e[t] and B_mᵀ · m_s[t]
    bme: Vec<Vec<f64>>,
    btms: Vec<Vec<f64>>,
}

impl<'a> Backward<'a> {
    fn new(params: &'a ModelParams, fwd: &'a DocForward) -> Self {
        let n = fwd.h.len();
        let p = params.head.proj_dim;
        let zero = || vec![vec![0.0; p]; n];
        let bme = fwd
            .tp
            .m_e
            .iter()
            .map(|v| params.head.b_m.matvec(v))
            .collect();
        let btms = fwd
            .tp
            .m_s
            .iter()
            .map(|v| params.head.b_m.matvec_t(v))
            .collect();
        Backward {
            params,
            fwd,
            d_ms: zero(),
            d_me: zero(),
            d_as: zero(),
            d_ae: zero(),
            bme,
            btms,
        }
    }

    /// d loss / d f_m(span) = g.
    fn add_mention_grad(&mut self, span: Span, g: f64, grads: &mut ModelParams) {
        if g == 0.0 {
            return;
        }
        let (a, b) = (span.start, span.end);
        let tp = &self.fwd.tp;
        axpy(&mut grads.head.v_s, g, &tp.m_s[a]);
        axpy(&mut grads.head.v_e, g, &tp.m_e[b]);
        grads.head.b_m.add_outer(g, &tp.m_s[a], &tp.m_e[b]);
        let head = &self.params.head;
        for i in 0..head.proj_dim {
            self.d_ms[a][i] += g * (head.v_s[i] + self.bme[b][i]);
            self.d_me[b][i] += g * (head.v_e[i] + self.btms[a][i]);
        }
    }

    /// d loss / d f_a(c, q) = g.
    fn add_antecedent_grad(&mut self, c: Span, q: Span, g: f64, grads: &mut ModelParams) {
        if g == 0.0 {
            return;
        }
        let tp = &self.fwd.tp;
        let head = &self.params.head;
        let cs = &tp.a_s[c.start];
        let ce = &tp.a_e[c.end];
        let qs = &tp.a_s[q.start];
        let qe = &tp.a_e[q.end];
        grads.head.b_ss.add_outer(g, cs, qs);
        grads.head.b_se.add_outer(g, cs, qe);
        grads.head.b_es.add_outer(g, ce, qs);
        grads.head.b_ee.add_outer(g, ce, qe);
        axpy(&mut self.d_as[c.start], g, &head.b_ss.matvec(qs));
        axpy(&mut self.d_as[c.start], g, &head.b_se.matvec(qe));
        axpy(&mut self.d_ae[c.end], g, &head.b_es.matvec(qs));
        axpy(&mut self.d_ae[c.end], g, &head.b_ee.matvec(qe));
        axpy(&mut self.d_as[q.start], g, &head.b_ss.matvec_t(cs));
        axpy(&mut self.d_as[q.start], g, &head.b_es.matvec_t(ce));
        axpy(&mut self.d_ae[q.end], g, &head.b_se.matvec_t(cs));
        axpy(&mut self.d_ae[q.end], g, &head.b_ee.matvec_t(ce));
    }

    /// Push token-projection gradients through the gelu projections and
    /// the encoder into the parameter gradients.
    fn finish(self, grads: &mut ModelParams) {
        let n = self.fwd.h.len();
        let dim = self.params.encoder.dim;
        let mut d_h = vec![vec![0.0; dim]; n];

        let proj_backward = |w: &Matrix,
                             pre: &[f64],
                             d_out: &[f64],
                             h_t: &[f64],
                             gw: &mut Matrix,
                             gb: &mut [f64],
                             dh_t: &mut [f64]| {
            if d_out.iter().all(|&v| v == 0.0) {
                return;
            }
            let dpre: Vec<f64> = d_out
                .iter()
                .zip(pre)
                .map(|(d, &x)| d * gelu_prime(x))
                .collect();
            gw.add_outer(1.0, &dpre, h_t);
            axpy(gb, 1.0, &dpre);
            axpy(dh_t, 1.0, &w.matvec_t(&dpre));
        };

        let head = &self.params.head;
        let tp = &self.fwd.tp;
        for t in 0..n {
            let h_t = &self.fwd.h[t];
            proj_backward(
                &head.w_s,
                &tp.pre_m_s[t],
                &self.d_ms[t],
                h_t,
                &mut grads.head.w_s,
                &mut grads.head.b_s,
                &mut d_h[t],
            );
            proj_backward(
                &head.w_e,
                &tp.pre_m_e[t],
                &self.d_me[t],
                h_t,
                &mut grads.head.w_e,
                &mut grads.head.b_e,
                &mut d_h[t],
            );
            proj_backward(
                &head.u_s,
                &tp.pre_a_s[t],
                &self.d_as[t],
                h_t,
                &mut grads.head.u_s,
                &mut grads.head.c_s,
                &mut d_h[t],
            );
            proj_backward(
                &head.u_e,
                &tp.pre_a_e[t],
                &self.d_ae[t],
                h_t,
                &mut grads.head.u_e,
                &mut grads.head.c_e,
                &mut d_h[t],
            );
        }

        // encoder: h_t = tanh(W · window + b), window = [e_{t-1}; e_t; e_{t+1}]
        // with zeros beyond the segment boundary
        let enc = &self.params.encoder;
        let mut window = vec![0.0; 3 * dim];
        for &(s, e) in &self.fwd.seg_bounds {
            for t in s..e {
                if d_h[t].iter().all(|&v| v == 0.0) {
                    continue;
                }
                let h_t = &self.fwd.h[t];
                let dpre: Vec<f64> = d_h[t]
                    .iter()
                    .zip(h_t)
                    .map(|(d, &hv)| d * (1.0 - hv * hv))
                    .collect();
                axpy(&mut grads.encoder.mix_bias, 1.0, &dpre);
                window.iter_mut().for_each(|w| *w = 0.0);
                if t > s {
                    window[..dim].copy_from_slice(enc.embedding.row(self.fwd.ids[t - 1]));
                }
                window[dim..2 * dim].copy_from_slice(enc.embedding.row(self.fwd.ids[t]));
                if t + 1 < e {
                    window[2 * dim..].copy_from_slice(enc.embedding.row(self.fwd.ids[t + 1]));
                }
                grads.encoder.mix_weights.add_outer(1.0, &dpre, &window);
                // d embedding rows via the three column blocks of W
                for (block, off) in [(0usize, -1isize), (1, 0), (2, 1)] {
                    let src = t as isize + off;
                    if src < s as isize || src >= e as isize {
                        continue;
                    }
                    let row_id = self.fwd.ids[src as usize];
                    let gemb = grads.encoder.embedding.row_mut(row_id);
                    for r in 0..dim {
                        let v = dpre[r];
                        if v == 0.0 {
                            continue;
                        }
                        let wrow = enc.mix_weights.row(r);
                        for c in 0..dim {
                            gemb[c] += v * wrow[block * dim + c];
                        }
                    }
                }
            }
        }
    }
}

/// Loss of one document under the selected objective, with gradients
/// (scaled by `weight`) accumulated into `grads`.
pub fn doc_loss_and_grads(
    params: &ModelParams,
    doc: &Document,
    selector: &LossSelector,
    max_length: usize,
    weight: f64,
    grads: &mut ModelParams,
) -> Result<f64> {
    let fwd = forward_document(params, doc, max_length);
    let n = fwd.h.len();
    let mut back = Backward::new(params, &fwd);

    let loss = match selector {
        LossSelector::MentionBce { mentions } => {
            let spans = enumerate_spans(n, params.max_span_width);
            if spans.is_empty() {
                return Ok(0.0);
            }
            let scores: Vec<f64> = spans
                .iter()
                .map(|&s| params.head.mention_score_cached(&fwd.tp, s))
                .collect();
            let loss = mention_bce_loss(&scores, &spans, mentions);
            let scale = weight / spans.len() as f64;
            for (&span, &score) in spans.iter().zip(&scores) {
                let y = if mentions.contains(&span) { 1.0 } else { 0.0 };
                back.add_mention_grad(span, (sigmoid(score) - y) * scale, grads);
            }
            loss
        }
        LossSelector::MarginalNll { gold } => {
            let spans = enumerate_spans(n, params.max_span_width);
            let scores: Vec<f64> = spans
                .iter()
                .map(|&s| params.head.mention_score_cached(&fwd.tp, s))
                .collect();
            let pruned = prune(
                &ScoredSpans {
                    spans,
                    mention_scores: scores,
                },
                n,
                &params.prune_config(),
            );
            marginal_pass(params, &fwd, &pruned.spans, gold, weight, &mut back, grads)?
        }
        LossSelector::SoftDistill { targets, tau } => {
            soft_pass(params, &fwd, targets, *tau, weight, &mut back, grads)?
        }
    };

    if !loss.is_finite() {
        return Err(CoreError::Training(format!(
            "non-finite loss on doc {}",
            doc.doc_id
        )));
    }
    back.finish(grads);
    Ok(loss)
}

fn marginal_pass(
    params: &ModelParams,
    fwd: &DocForward,
    pruned: &[Span],
    gold: &ClusterSet,
    weight: f64,
    back: &mut Backward,
    grads: &mut ModelParams,
) -> Result<f64> {
    let k = pruned.len();
    if k == 0 {
        return Ok(0.0);
    }
    let fm: Vec<f64> = pruned
        .iter()
        .map(|&s| params.head.mention_score_cached(&fwd.tp, s))
        .collect();
    let mut d_fm = vec![0.0; k];
    let scale = weight / k as f64;
    let mut loss_sum = 0.0;
    for (j, &q) in pruned.iter().enumerate() {
        let candidates = &pruned[..j];
        let scores: Vec<f64> = candidates
            .iter()
            .enumerate()
            .map(|(i, &c)| fm[i] + fm[j] + params.head.antecedent_score_cached(&fwd.tp, c, q))
            .collect();
        let dist = distribution_from_scores(&scores);
        let (gold_idx, gold_eps) = gold_antecedents(q, candidates, gold);
        loss_sum += marginal_nll_loss(&dist, &gold_idx, gold_eps);
        let s_gold: f64 = {
            let mut s: f64 = gold_idx.iter().map(|&i| dist[i]).sum();
            if gold_eps {
                s += dist[dist.len() - 1];
            }
            s.max(LOG_FLOOR)
        };
        let is_gold = {
            let mut v = vec![false; candidates.len()];
            for &i in &gold_idx {
                v[i] = true;
            }
            v
        };
        for (i, &c) in candidates.iter().enumerate() {
            let mut d = dist[i];
            if is_gold[i] {
                d -= dist[i] / s_gold;
            }
            let g = d * scale;
            if g == 0.0 {
                continue;
            }
            d_fm[i] += g;
            d_fm[j] += g;
            back.add_antecedent_grad(c, q, g, grads);
        }
    }
    for (j, &q) in pruned.iter().enumerate() {
        back.add_mention_grad(q, d_fm[j], grads);
    }
    Ok(loss_sum / k as f64)
}

fn soft_pass(
    params: &ModelParams,
    fwd: &DocForward,
    targets: &SoftTargets,
    tau: f64,
    weight: f64,
    back: &mut Backward,
    grads: &mut ModelParams,
) -> Result<f64> {
    let spans = &targets.spans;
    if targets.logits.len() != spans.len() {
        return Err(CoreError::Contract(
            "soft targets must carry one logit list per teacher span".into(),
        ));
    }
    if let Some(s) = spans.iter().find(|s| s.end >= fwd.h.len()) {
        return Err(CoreError::Contract(format!(
            "teacher span ({}, {}) out of range",
            s.start, s.end
        )));
    }
    let k = spans.len();
    if k == 0 {
        return Ok(0.0);
    }
    let fm: Vec<f64> = spans
        .iter()
        .map(|&s| params.head.mention_score_cached(&fwd.tp, s))
        .collect();
    let mut d_fm = vec![0.0; k];
    let scale = weight / k as f64;
    let mut loss_sum = 0.0;
    for (j, &q) in spans.iter().enumerate() {
        let teacher = &targets.logits[j];
        if teacher.len() != j {
            return Err(CoreError::Contract(
                "teacher logits do not cover exactly the preceding pruned spans".into(),
            ));
        }
        let student: Vec<f64> = spans[..j]
            .iter()
            .enumerate()
            .map(|(i, &c)| fm[i] + fm[j] + params.head.antecedent_score_cached(&fwd.tp, c, q))
            .collect();
        loss_sum += soft_distill_loss(teacher, &student, tau)?;
        let pt = distribution_from_scores(&teacher.iter().map(|l| l / tau).collect::<Vec<_>>());
        let ps = distribution_from_scores(&student.iter().map(|l| l / tau).collect::<Vec<_>>());
        for (i, &c) in spans[..j].iter().enumerate() {
            let g = (ps[i] - pt[i]) / tau * scale;
            if g == 0.0 {
                continue;
            }
            d_fm[i] += g;
            d_fm[j] += g;
            back.add_antecedent_grad(c, q, g, grads);
        }
    }
    for (j, &q) in spans.iter().enumerate() {
        back.add_mention_grad(q, d_fm[j], grads);
    }
    Ok(loss_sum / k as f64)
}
