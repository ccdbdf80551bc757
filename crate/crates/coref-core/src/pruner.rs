//! Span enumeration and aggressive top-λT mention pruning.

use crate::domain::Span;
use crate::scoring::ScoredSpans;

/// Pruning configuration: λ of the kept-span budget ⌈λT⌉ and the maximum
/// span width considered at enumeration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PruneConfig {
    pub lambda: f64,
    pub max_span_width: usize,
    pub max_antecedents: Option<usize>,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            lambda: 0.25,
            max_span_width: 10,
            max_antecedents: None,
        }
    }
}

/// All spans with width ≤ `max_width` over `n_tokens` tokens, in
/// antecedent order. Count is Σ_{w=1..min(W,T)} (T−w+1).
pub fn enumerate_spans(n_tokens: usize, max_width: usize) -> Vec<Span> {
    assert!(max_width >= 1);
    let mut spans = Vec::new();
    for start in 0..n_tokens {
        for end in start..n_tokens.min(start + max_width) {
            spans.push(Span::new(start, end));
        }
    }
    spans.sort();
    spans
}

/// Kept-span budget for a document of `n_tokens` tokens: ⌈λT⌉.
pub fn keep_count(n_tokens: usize, lambda: f64) -> usize {
    (lambda * n_tokens as f64).ceil() as usize
}

/// Keep the min(⌈λT⌉, |spans|) spans with the highest mention scores.
/// Ties break toward the earlier span; output is in span order.
pub fn prune(scored: &ScoredSpans, n_tokens: usize, cfg: &PruneConfig) -> ScoredSpans {
    let k = keep_count(n_tokens, cfg.lambda).min(scored.spans.len());
    let mut order: Vec<usize> = (0..scored.spans.len()).collect();
    // stable by score descending; the enumeration order is span order,
    // so equal scores keep the earlier span first
    order.sort_by(|&a, &b| {
        scored.mention_scores[b]
            .partial_cmp(&scored.mention_scores[a])
            .unwrap()
            .then_with(|| scored.spans[a].cmp(&scored.spans[b]))
    });
    let mut kept: Vec<usize> = order.into_iter().take(k).collect();
    kept.sort_by_key(|&i| scored.spans[i]);
    ScoredSpans {
        spans: kept.iter().map(|&i| scored.spans[i]).collect(),
        mention_scores: kept.iter().map(|&i| scored.mention_scores[i]).collect(),
    }
}

/// Number of ordered antecedent comparisons among the ⌈λT⌉ kept spans:
/// k(k−1)/2.
pub fn candidate_pairs_count(n_tokens: usize, lambda: f64) -> u64 {
    let k = keep_count(n_tokens, lambda) as u64;
    k * k.saturating_sub(1) / 2
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(spans: Vec<Span>, scores: Vec<f64>) -> ScoredSpans {
        ScoredSpans {
            spans,
            mention_scores: scores,
        }
    }

    #[test]
    fn unit_width_enumeration() {
        let spans = enumerate_spans(3, 1);
        assert_eq!(
            spans,
            vec![Span::new(0, 0), Span::new(1, 1), Span::new(2, 2)]
        );
    }

    #[test]
    fn full_width_enumeration_count() {
        assert_eq!(enumerate_spans(3, 3).len(), 6);
        assert_eq!(enumerate_spans(0, 3).len(), 0);
        // Σ_{w=1..min(W,T)} (T−w+1)
        let t = 12;
        let w = 5;
        let expect: usize = (1..=w.min(t)).map(|width| t - width + 1).sum();
        assert_eq!(enumerate_spans(t, w).len(), expect);
    }

    #[test]
    fn enumeration_is_in_antecedent_order() {
        let spans = enumerate_spans(8, 4);
        for pair in spans.windows(2) {
            assert!(crate::domain::span_precedes(pair[0], pair[1]));
        }
    }

    #[test]
    fn prune_keeps_ceil_lambda_t() {
        let spans = enumerate_spans(100, 2);
        let scores: Vec<f64> = (0..spans.len()).map(|i| i as f64).collect();
        let cfg = PruneConfig::default();
        let kept = prune(&scored(spans, scores), 100, &cfg);
        assert_eq!(kept.len(), 25);
    }

    #[test]
    fn lambda_one_with_fewer_spans_keeps_all() {
        let spans = enumerate_spans(4, 1);
        let kept = prune(
            &scored(spans.clone(), vec![0.0; 4]),
            8,
            &PruneConfig {
                lambda: 1.0,
                ..Default::default()
            },
        );
        assert_eq!(kept.spans, spans);
    }

    #[test]
    fn equal_scores_keep_earliest_spans() {
        let spans = enumerate_spans(4, 1);
        let kept = prune(
            &scored(spans, vec![1.0; 4]),
            4,
            &PruneConfig {
                lambda: 0.5,
                ..Default::default()
            },
        );
        assert_eq!(kept.spans, vec![Span::new(0, 0), Span::new(1, 1)]);
    }

    #[test]
    fn kept_scores_dominate_discarded() {
        let spans = enumerate_spans(10, 3);
        let scores: Vec<f64> = spans
            .iter()
            .map(|s| ((s.start * 7 + s.end * 13) % 5) as f64)
            .collect();
        let all = scored(spans, scores);
        let kept = prune(&all, 10, &PruneConfig::default());
        let min_kept = kept
            .mention_scores
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        for (s, &sc) in all.spans.iter().zip(&all.mention_scores) {
            if !kept.spans.contains(s) {
                assert!(sc <= min_kept);
            }
        }
    }

    #[test]
    fn prune_is_translation_invariant() {
        let spans = enumerate_spans(12, 3);
        let scores: Vec<f64> = spans
            .iter()
            .map(|s| (s.start as f64).sin() + (s.end as f64).cos())
            .collect();
        let shifted: Vec<f64> = scores.iter().map(|v| v + 100.0).collect();
        let cfg = PruneConfig::default();
        let a = prune(&scored(spans.clone(), scores), 12, &cfg);
        let b = prune(&scored(spans, shifted), 12, &cfg);
        assert_eq!(a.spans, b.spans);
    }

    #[test]
    fn pairs_count_recovers_the_pruning_factor() {
        // λ 0.4 → 0.25 at T=1000 decreases comparisons by ≈ 2.56
        let ratio =
            candidate_pairs_count(1000, 0.4) as f64 / candidate_pairs_count(1000, 0.25) as f64;
        assert!((ratio - 2.56).abs() < 0.01, "ratio {ratio}");
        assert_eq!(candidate_pairs_count(0, 0.25), 0);
        assert_eq!(candidate_pairs_count(4, 1.0), 6);
    }
}
