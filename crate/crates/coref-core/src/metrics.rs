//! Coreference evaluation: MUC, B³, CEAF_φ4, and their average F1.
//!
//! All three metrics follow the reference scorer semantics, with the
//! 0/0 → 0 convention throughout. Corpus-level numbers aggregate by
//! summing numerators and denominators across documents (micro).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::domain::{ClusterSet, Span};

/// Precision / recall / F1, each in [0, 1].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn safe_div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl MetricTriple {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = safe_div(2.0 * precision * recall, precision + recall);
        MetricTriple {
            precision,
            recall,
            f1,
        }
    }
}

/// Raw numerators/denominators of one metric, summable across documents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub p_num: f64,
    pub p_den: f64,
    pub r_num: f64,
    pub r_den: f64,
}

impl MetricCounts {
    pub fn merge(&mut self, other: &MetricCounts) {
        self.p_num += other.p_num;
        self.p_den += other.p_den;
        self.r_num += other.r_num;
        self.r_den += other.r_den;
    }

    pub fn triple(&self) -> MetricTriple {
        MetricTriple::from_pr(
            safe_div(self.p_num, self.p_den),
            safe_div(self.r_num, self.r_den),
        )
    }
}

fn mention_index(cs: &ClusterSet) -> HashMap<Span, usize> {
    let mut idx = HashMap::new();
    for (i, cluster) in cs.clusters.iter().enumerate() {
        for &span in cluster {
            idx.insert(span, i);
        }
    }
    idx
}

/// Link-based MUC recall numerator for one side: Σ (|k| − p(k)) where
/// p(k) partitions cluster k by the other side's clusters, unmatched
/// mentions forming their own partitions.
fn muc_side(key: &ClusterSet, response: &ClusterSet) -> (f64, f64) {
    let resp_idx = mention_index(response);
    let mut num = 0.0;
    let mut den = 0.0;
    for cluster in &key.clusters {
        let mut touched = std::collections::HashSet::new();
        let mut unmatched = 0usize;
        for span in cluster {
            match resp_idx.get(span) {
                Some(&r) => {
                    touched.insert(r);
                }
                None => unmatched += 1,
            }
        }
        let partitions = touched.len() + unmatched;
        num += (cluster.len() - partitions) as f64;
        den += (cluster.len() - 1) as f64;
    }
    (num, den)
}

pub fn muc_counts(key: &ClusterSet, response: &ClusterSet) -> MetricCounts {
    let (r_num, r_den) = muc_side(key, response);
    let (p_num, p_den) = muc_side(response, key);
    MetricCounts {
        p_num,
        p_den,
        r_num,
        r_den,
    }
}

pub fn muc(key: &ClusterSet, response: &ClusterSet) -> MetricTriple {
    muc_counts(key, response).triple()
}

/// B³ per-mention overlap sums for one side; mentions absent from the
/// other side contribute zero overlap.
fn b_cubed_side(own: &ClusterSet, other: &ClusterSet) -> (f64, f64) {
    let other_idx = mention_index(other);
    let mut num = 0.0;
    let mut den = 0.0;
    for cluster in &own.clusters {
        for span in cluster {
            let overlap = match other_idx.get(span) {
                Some(&oc) => {
                    let other_cluster = &other.clusters[oc];
                    cluster.iter().filter(|s| other_cluster.contains(s)).count()
                }
                None => 0,
            };
            num += overlap as f64 / cluster.len() as f64;
            den += 1.0;
        }
    }
    (num, den)
}

pub fn b_cubed_counts(key: &ClusterSet, response: &ClusterSet) -> MetricCounts {
    let (p_num, p_den) = b_cubed_side(response, key);
    let (r_num, r_den) = b_cubed_side(key, response);
    MetricCounts {
        p_num,
        p_den,
        r_num,
        r_den,
    }
}

pub fn b_cubed(key: &ClusterSet, response: &ClusterSet) -> MetricTriple {
    b_cubed_counts(key, response).triple()
}

/// φ4(k, r) = 2|k∩r| / (|k| + |r|).
fn phi4(k: &[Span], r: &[Span]) -> f64 {
    let inter = k.iter().filter(|s| r.contains(s)).count();
    2.0 * inter as f64 / (k.len() + r.len()) as f64
}

/// Maximum-weight one-to-one alignment value over a rectangular
/// similarity matrix (Kuhn–Munkres on the negated, square-padded
/// matrix).
pub fn max_assignment_value(sim: &[Vec<f64>]) -> f64 {
    let n = sim.len();
    let m = sim.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return 0.0;
    }
    let dim = n.max(m);
    // minimize negated similarities; padding entries cost 0
    let cost = |i: usize, j: usize| -> f64 {
        if i < n && j < m {
            -sim[i][j]
        } else {
            0.0
        }
    };

    // Kuhn–Munkres with row/column potentials, O(dim^3).
    let mut u = vec![0.0f64; dim + 1];
    let mut v = vec![0.0f64; dim + 1];
    let mut match_col = vec![0usize; dim + 1]; // 1-based row matched to column, 0 = free
    for row in 1..=dim {
        let mut links = vec![0usize; dim + 1];
        let mut mins = vec![f64::INFINITY; dim + 1];
        let mut visited = vec![false; dim + 1];
        let mut marked_col = 0usize;
        match_col[0] = row;
        loop {
            visited[marked_col] = true;
            let cur_row = match_col[marked_col];
            let mut delta = f64::INFINITY;
            let mut next_col = 0usize;
            for col in 1..=dim {
                if visited[col] {
                    continue;
                }
                let reduced = cost(cur_row - 1, col - 1) - u[cur_row] - v[col];
                if reduced < mins[col] {
                    mins[col] = reduced;
                    links[col] = marked_col;
                }
                if mins[col] < delta {
                    delta = mins[col];
                    next_col = col;
                }
            }
            for col in 0..=dim {
                if visited[col] {
                    u[match_col[col]] += delta;
                    v[col] -= delta;
                } else {
                    mins[col] -= delta;
                }
            }
            marked_col = next_col;
            if match_col[marked_col] == 0 {
                break;
            }
        }
        // augment along alternating path
        while marked_col != 0 {
            let prev = links[marked_col];
            match_col[marked_col] = match_col[prev];
            marked_col = prev;
        }
    }

    let mut total = 0.0;
    for col in 1..=dim {
        let row = match_col[col];
        if row >= 1 {
            total += -cost(row - 1, col - 1);
        }
    }
    total
}

pub fn ceaf_phi4_counts(key: &ClusterSet, response: &ClusterSet) -> MetricCounts {
    let sim: Vec<Vec<f64>> = key
        .clusters
        .iter()
        .map(|k| response.clusters.iter().map(|r| phi4(k, r)).collect())
        .collect();
    let total = max_assignment_value(&sim);
    MetricCounts {
        p_num: total,
        p_den: response.clusters.len() as f64,
        r_num: total,
        r_den: key.clusters.len() as f64,
    }
}

pub fn ceaf_phi4(key: &ClusterSet, response: &ClusterSet) -> MetricTriple {
    ceaf_phi4_counts(key, response).triple()
}

/// Arithmetic mean of the MUC, B³, and CEAF_φ4 F1 values — the headline
/// coreference score.
pub fn avg_f1(muc: &MetricTriple, b_cubed: &MetricTriple, ceaf: &MetricTriple) -> f64 {
    (muc.f1 + b_cubed.f1 + ceaf.f1) / 3.0
}

/// Micro-aggregated evaluation over a corpus of (key, response) pairs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusEvaluation {
    pub muc: MetricTriple,
    pub b3: MetricTriple,
    pub ceaf_phi4: MetricTriple,
    pub avg_f1: f64,
}

pub fn evaluate_corpus<'a>(
    pairs: impl IntoIterator<Item = (&'a ClusterSet, &'a ClusterSet)>,
) -> CorpusEvaluation {
    let mut muc_c = MetricCounts::default();
    let mut b3_c = MetricCounts::default();
    let mut ceaf_c = MetricCounts::default();
    for (key, response) in pairs {
        muc_c.merge(&muc_counts(key, response));
        b3_c.merge(&b_cubed_counts(key, response));
        ceaf_c.merge(&ceaf_phi4_counts(key, response));
    }
    let muc = muc_c.triple();
    let b3 = b3_c.triple();
    let ceaf = ceaf_c.triple();
    CorpusEvaluation {
        muc,
        b3,
        ceaf_phi4: ceaf,
        avg_f1: avg_f1(&muc, &b3, &ceaf),
    }
}
