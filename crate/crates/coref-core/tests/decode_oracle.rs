//! Decoder equivalence against an independent brute-force oracle:
//! per-query argmax over {candidates, ε} with the documented tie rules,
//! then naive set-merging for connected components.

#![allow(clippy::needless_range_loop)]

use rand::Rng;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

use coref_core::decoder::decode_clusters;
use coref_core::domain::Span;
use coref_core::scoring::ScoredSpans;

/// Oracle clustering: completely separate implementation from the
/// union-find decoder.
fn oracle_clusters(
    spans: &[Span],
    score: &dyn Fn(Span, Span) -> f64,
    cap: Option<usize>,
) -> Vec<Vec<Span>> {
    // each span starts in its own set
    let mut sets: Vec<Vec<usize>> = (0..spans.len()).map(|i| vec![i]).collect();
    for j in 0..spans.len() {
        let first = cap.map_or(0, |c| j.saturating_sub(c));
        // argmax over candidates; link only if it strictly beats ε's 0,
        // earliest candidate wins exact ties
        let mut best_score = f64::NEG_INFINITY;
        let mut best: Option<usize> = None;
        for i in first..j {
            let s = score(spans[i], spans[j]);
            if s > best_score {
                best_score = s;
                best = Some(i);
            }
        }
        if best_score > 0.0 {
            let i = best.unwrap();
            // merge the sets containing i and j
            let si = sets.iter().position(|s| s.contains(&i)).unwrap();
            let sj = sets.iter().position(|s| s.contains(&j)).unwrap();
            if si != sj {
                let moved = sets.remove(sj.max(si));
                sets[sj.min(si)].extend(moved);
            }
        }
    }
    let mut clusters: Vec<Vec<Span>> = sets
        .into_iter()
        .filter(|s| s.len() >= 2)
        .map(|mut s| {
            s.sort_unstable();
            s.into_iter().map(|i| spans[i]).collect()
        })
        .collect();
    clusters.sort();
    clusters
}

#[test]
fn decode_matches_brute_force_on_500_random_configurations() {
    let mut rng = Xoshiro256StarStar::seed_from_u64(99);
    for case in 0..500u32 {
        let n = rng.random_range(0..=8usize);
        let spans: Vec<Span> = (0..n).map(|i| Span::new(2 * i, 2 * i)).collect();
        // score table with deliberate ties: quantized to steps of 0.5
        // including exact zeros
        let mut table = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                table[i][j] = (rng.random_range(-4i32..=4) as f64) * 0.5;
            }
        }
        let score = {
            let table = table.clone();
            move |c: Span, q: Span| table[c.start / 2][q.start / 2]
        };
        let cap = match rng.random_range(0..3u8) {
            0 => None,
            1 => Some(1),
            _ => Some(3),
        };
        let pruned = ScoredSpans {
            spans: spans.clone(),
            mention_scores: vec![0.0; n],
        };
        let decoded = decode_clusters(&pruned, &score, cap);
        let expect = oracle_clusters(&spans, &score, cap);
        assert_eq!(
            decoded.clusters, expect,
            "case {case}: n={n} cap={cap:?} table={table:?}"
        );
    }
}

#[test]
fn decode_matches_brute_force_with_continuous_scores() {
    let mut rng = Xoshiro256StarStar::seed_from_u64(7);
    for _ in 0..200 {
        let n = rng.random_range(2..=8usize);
        let spans: Vec<Span> = (0..n).map(|i| Span::new(i, i)).collect();
        let mut table = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                table[i][j] = rng.random::<f64>() * 2.0 - 1.0;
            }
        }
        let score = move |c: Span, q: Span| table[c.start][q.start];
        let pruned = ScoredSpans {
            spans: spans.clone(),
            mention_scores: vec![0.0; n],
        };
        assert_eq!(
            decode_clusters(&pruned, &score, None).clusters,
            oracle_clusters(&spans, &score, None)
        );
    }
}
