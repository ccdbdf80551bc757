//! Span-pair scoring head.
//!
//! Spans are represented only by their start and end token vectors, so
//! memory stays O(n) in tokens. The mention scorer f_m and the pairwise
//! antecedent scorer f_a compose into the final link score
//! F(c, q) = f_m(c) + f_m(q) + f_a(c, q), with F(ε, q) = 0 exactly for
//! the null antecedent.

use rand::Rng;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use crate::domain::{span_precedes, Span};
use crate::encoder::INIT_SCALE;
use crate::error::{CoreError, Result};
use crate::linalg::{dot, softmax, Matrix};

/// Scoring-head parameters: start/end projections with a gelu
/// nonlinearity, mention vectors, and bilinear forms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub proj_dim: usize,
    // mention scorer
    pub w_s: Matrix,
    pub b_s: Vec<f64>,
    pub w_e: Matrix,
    pub b_e: Vec<f64>,
    pub v_s: Vec<f64>,
    pub v_e: Vec<f64>,
    pub b_m: Matrix,
    // antecedent scorer
    pub u_s: Matrix,
    pub c_s: Vec<f64>,
    pub u_e: Matrix,
    pub c_e: Vec<f64>,
    pub b_ss: Matrix,
    pub b_se: Matrix,
    pub b_es: Matrix,
    pub b_ee: Matrix,
}

/// Candidate spans with their aligned mention scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSpans {
    pub spans: Vec<Span>,
    pub mention_scores: Vec<f64>,
}

impl ScoredSpans {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// gelu, tanh-approximation variant:
/// 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

/// Derivative of the tanh-approximation gelu.
#[inline]
pub fn gelu_prime(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub fn init_head(seed: u64, dim: usize, proj_dim: usize) -> HeadParams {
    assert!(dim > 0 && proj_dim > 0);
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut next = move || rng.random::<f64>() * 2.0 * INIT_SCALE - INIT_SCALE;
    let p = proj_dim;
    HeadParams {
        proj_dim: p,
        w_s: Matrix::from_fn(p, dim, &mut next),
        b_s: (0..p).map(|_| next()).collect(),
        w_e: Matrix::from_fn(p, dim, &mut next),
        b_e: (0..p).map(|_| next()).collect(),
        v_s: (0..p).map(|_| next()).collect(),
        v_e: (0..p).map(|_| next()).collect(),
        b_m: Matrix::from_fn(p, p, &mut next),
        u_s: Matrix::from_fn(p, dim, &mut next),
        c_s: (0..p).map(|_| next()).collect(),
        u_e: Matrix::from_fn(p, dim, &mut next),
        c_e: (0..p).map(|_| next()).collect(),
        b_ss: Matrix::from_fn(p, p, &mut next),
        b_se: Matrix::from_fn(p, p, &mut next),
        b_es: Matrix::from_fn(p, p, &mut next),
        b_ee: Matrix::from_fn(p, p, &mut next),
    }
}

/// Per-token projections through the head, cached once per document.
/// `pre_*` holds pre-gelu activations (needed for backprop).
#[derive(Clone, Debug)]
pub struct TokenProjections {
    pub m_s: Vec<Vec<f64>>,
    pub m_e: Vec<Vec<f64>>,
    pub a_s: Vec<Vec<f64>>,
    pub a_e: Vec<Vec<f64>>,
    pub pre_m_s: Vec<Vec<f64>>,
    pub pre_m_e: Vec<Vec<f64>>,
    pub pre_a_s: Vec<Vec<f64>>,
    pub pre_a_e: Vec<Vec<f64>>,
}

fn project(w: &Matrix, b: &[f64], h: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut pre = w.matvec(h);
    for (p, bi) in pre.iter_mut().zip(b) {
        *p += bi;
    }
    let out = pre.iter().map(|&x| gelu(x)).collect();
    (pre, out)
}

impl HeadParams {
    pub fn check_dim(&self, encoder_dim: usize) -> Result<()> {
        if self.w_s.cols() != encoder_dim {
            return Err(CoreError::Config(format!(
                "head expects encoder dim {}, got {}",
                self.w_s.cols(),
                encoder_dim
            )));
        }
        Ok(())
    }

    pub fn project_tokens(&self, h: &[Vec<f64>]) -> TokenProjections {
        let n = h.len();
        let mut tp = TokenProjections {
            m_s: Vec::with_capacity(n),
            m_e: Vec::with_capacity(n),
            a_s: Vec::with_capacity(n),
            a_e: Vec::with_capacity(n),
            pre_m_s: Vec::with_capacity(n),
            pre_m_e: Vec::with_capacity(n),
            pre_a_s: Vec::with_capacity(n),
            pre_a_e: Vec::with_capacity(n),
        };
        for ht in h {
            let (pre, out) = project(&self.w_s, &self.b_s, ht);
            tp.pre_m_s.push(pre);
            tp.m_s.push(out);
            let (pre, out) = project(&self.w_e, &self.b_e, ht);
            tp.pre_m_e.push(pre);
            tp.m_e.push(out);
            let (pre, out) = project(&self.u_s, &self.c_s, ht);
            tp.pre_a_s.push(pre);
            tp.a_s.push(out);
            let (pre, out) = project(&self.u_e, &self.c_e, ht);
            tp.pre_a_e.push(pre);
            tp.a_e.push(out);
        }
        tp
    }

    /// f_m from cached projections.
    pub fn mention_score_cached(&self, tp: &TokenProjections, q: Span) -> f64 {
        let ms = &tp.m_s[q.start];
        let me = &tp.m_e[q.end];
        dot(&self.v_s, ms) + dot(&self.v_e, me) + dot(ms, &self.b_m.matvec(me))
    }

    /// f_a from cached projections. Requires span_precedes(c, q).
    pub fn antecedent_score_cached(&self, tp: &TokenProjections, c: Span, q: Span) -> f64 {
        let cs = &tp.a_s[c.start];
        let ce = &tp.a_e[c.end];
        let qs = &tp.a_s[q.start];
        let qe = &tp.a_e[q.end];
        dot(cs, &self.b_ss.matvec(qs))
            + dot(cs, &self.b_se.matvec(qe))
            + dot(ce, &self.b_es.matvec(qs))
            + dot(ce, &self.b_ee.matvec(qe))
    }

    /// F(c, q) from cached projections; `None` is the null antecedent ε.
    pub fn pair_score_cached(&self, tp: &TokenProjections, c: Option<Span>, q: Span) -> f64 {
        match c {
            None => 0.0,
            Some(c) => {
                self.mention_score_cached(tp, c)
                    + self.mention_score_cached(tp, q)
                    + self.antecedent_score_cached(tp, c, q)
            }
        }
    }
}

/// Mention score f_m(q) over token vectors `h`.
pub fn mention_score(h: &[Vec<f64>], q: Span, params: &HeadParams) -> Result<f64> {
    if q.end >= h.len() {
        return Err(CoreError::Contract(format!(
            "span ({}, {}) out of range",
            q.start, q.end
        )));
    }
    params.check_dim(h[0].len())?;
    let (_, ms) = project(&params.w_s, &params.b_s, &h[q.start]);
    let (_, me) = project(&params.w_e, &params.b_e, &h[q.end]);
    Ok(dot(&params.v_s, &ms) + dot(&params.v_e, &me) + dot(&ms, &params.b_m.matvec(&me)))
}

/// Antecedent score f_a(c, q); `c` must precede `q`.
pub fn antecedent_score(h: &[Vec<f64>], c: Span, q: Span, params: &HeadParams) -> Result<f64> {
    if !span_precedes(c, q) {
        return Err(CoreError::Contract(format!(
            "antecedent ({}, {}) does not precede query ({}, {})",
            c.start, c.end, q.start, q.end
        )));
    }
    params.check_dim(h[0].len())?;
    let (_, cs) = project(&params.u_s, &params.c_s, &h[c.start]);
    let (_, ce) = project(&params.u_e, &params.c_e, &h[c.end]);
    let (_, qs) = project(&params.u_s, &params.c_s, &h[q.start]);
    let (_, qe) = project(&params.u_e, &params.c_e, &h[q.end]);
    Ok(dot(&cs, &params.b_ss.matvec(&qs))
        + dot(&cs, &params.b_se.matvec(&qe))
        + dot(&ce, &params.b_es.matvec(&qs))
        + dot(&ce, &params.b_ee.matvec(&qe)))
}

/// Composed pair score; `None` is the null antecedent and scores 0 exactly.
pub fn pair_score(h: &[Vec<f64>], c: Option<Span>, q: Span, params: &HeadParams) -> Result<f64> {
    match c {
        None => Ok(0.0),
        Some(c) => Ok(mention_score(h, c, params)?
            + mention_score(h, q, params)?
            + antecedent_score(h, c, q, params)?),
    }
}

/// Softmax distribution over `candidates ∪ {ε}`; the last entry is ε.
/// The ε logit is pinned at 0, anchoring the scale of all other scores.
pub fn antecedent_distribution(
    h: &[Vec<f64>],
    q: Span,
    candidates: &[Span],
    params: &HeadParams,
) -> Result<Vec<f64>> {
    let mut scores = Vec::with_capacity(candidates.len() + 1);
    for &c in candidates {
        scores.push(pair_score(h, Some(c), q, params)?);
    }
    scores.push(0.0); // ε
    Ok(softmax(&scores))
}

/// Softmax over precomputed pair scores with the ε logit appended.
pub fn distribution_from_scores(candidate_scores: &[f64]) -> Vec<f64> {
    let mut scores = candidate_scores.to_vec();
    scores.push(0.0);
    softmax(&scores)
}
