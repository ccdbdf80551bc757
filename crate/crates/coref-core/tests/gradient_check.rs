//! Finite-difference verification of the hand-written reverse-mode
//! gradients, for every parameter and all three training losses.

use std::collections::HashSet;

use coref_core::domain::{ClusterSet, Document, Span};
use coref_core::model::{ModelConfig, ModelParams};
use coref_core::tokenizer::tokenize;
use coref_core::trainer::teacher::{StringMatchTeacher, TeacherOracle};
use coref_core::trainer::{doc_loss_and_grads, LossSelector, SoftTargets};

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
const ABS_TOL: f64 = 1e-7;

fn fixture_model(seed: u64) -> ModelParams {
    ModelParams::init(&ModelConfig {
        vocab_size: 32,
        dim: 4,
        proj_dim: 3,
        max_span_width: 3,
        lambda: 0.4,
        seed,
    })
}

// 20 tokens, with repeated names so every loss has signal; max_length 7
// forces two segment boundaries through the encoder backward pass.
const MAX_LENGTH: usize = 7;

fn fixture_doc() -> Document {
    let mut doc = tokenize(
        "g",
        "Ann met Bob . Ann waved while Bob smiled . Carla wrote a letter to Ann before Bob returned .",
    );
    assert_eq!(doc.n_tokens(), 20);
    doc.gold_clusters = Some(ClusterSet::new(vec![
        vec![Span::new(0, 0), Span::new(4, 4), Span::new(15, 15)],
        vec![Span::new(2, 2), Span::new(7, 7), Span::new(17, 17)],
    ]));
    doc
}

fn loss_of(params: &ModelParams, doc: &Document, selector: &LossSelector) -> f64 {
    let mut scratch = params.zeros_like();
    doc_loss_and_grads(params, doc, selector, MAX_LENGTH, 1.0, &mut scratch).unwrap()
}

/// Compare analytic gradients against central differences for every
/// parameter of the model.
fn check_all_params(params: &ModelParams, doc: &Document, selector: &LossSelector, name: &str) {
    let mut grads = params.zeros_like();
    doc_loss_and_grads(params, doc, selector, MAX_LENGTH, 1.0, &mut grads).unwrap();

    let n_tensors = params.param_slices().len();
    let mut worst: (f64, String) = (0.0, String::new());
    let mut checked = 0usize;
    for t in 0..n_tensors {
        let len = params.param_slices()[t].1.len();
        for i in 0..len {
            let mut plus = params.clone();
            plus.param_slices_mut()[t].1[i] += H;
            let mut minus = params.clone();
            minus.param_slices_mut()[t].1[i] -= H;
            let fd = (loss_of(&plus, doc, selector) - loss_of(&minus, doc, selector)) / (2.0 * H);
            let analytic = grads.param_slices()[t].1[i];
            let diff = (fd - analytic).abs();
            let rel = diff / fd.abs().max(analytic.abs()).max(1e-12);
            assert!(
                diff <= ABS_TOL || rel <= REL_TOL,
                "{name}: tensor {t} index {i}: analytic {analytic}, fd {fd}, rel err {rel}"
            );
            if rel > worst.0 && diff > ABS_TOL {
                worst = (rel, format!("tensor {t} index {i}"));
            }
            checked += 1;
        }
    }
    assert!(checked > 200, "{name}: too few parameters checked");
}

#[test]
fn marginal_nll_gradients_match_finite_differences() {
    let params = fixture_model(11);
    let doc = fixture_doc();
    let gold = doc.gold_clusters.clone().unwrap();
    check_all_params(
        &params,
        &doc,
        &LossSelector::MarginalNll { gold: &gold },
        "marginal_nll",
    );
}

#[test]
fn mention_bce_gradients_match_finite_differences() {
    let params = fixture_model(12);
    let doc = fixture_doc();
    let mentions: HashSet<Span> = doc.gold_clusters.clone().unwrap().mentions().collect();
    check_all_params(
        &params,
        &doc,
        &LossSelector::MentionBce {
            mentions: &mentions,
        },
        "mention_bce",
    );
}

#[test]
fn soft_distill_gradients_match_finite_differences() {
    let params = fixture_model(13);
    let doc = fixture_doc();
    let targets = StringMatchTeacher::default().annotate(&doc).unwrap().soft;
    assert!(!targets.spans.is_empty());
    for tau in [1.0, 2.0] {
        check_all_params(
            &params,
            &doc,
            &LossSelector::SoftDistill {
                targets: &targets,
                tau,
            },
            &format!("soft_distill(tau={tau})"),
        );
    }
}

#[test]
fn soft_distill_with_handwritten_targets() {
    // teacher targets that are not derived from the student, exercising
    // the pS − pT gradient away from zero
    let params = fixture_model(14);
    let doc = fixture_doc();
    let spans = vec![
        Span::new(0, 0),
        Span::new(2, 2),
        Span::new(4, 5),
        Span::new(7, 7),
    ];
    let targets = SoftTargets {
        logits: (0..spans.len())
            .map(|j| (0..j).map(|i| (i as f64 - 1.0) * 1.5).collect())
            .collect(),
        spans,
    };
    check_all_params(
        &params,
        &doc,
        &LossSelector::SoftDistill {
            targets: &targets,
            tau: 1.0,
        },
        "soft_distill(handwritten)",
    );
}

#[test]
fn zero_params_are_a_bce_stationary_point_for_head_vectors() {
    // all-zero parameters: encoder outputs and projections are all zero,
    // so ∂BCE/∂v_s = Σ g · m_s = 0 regardless of labels
    let params = fixture_model(1).zeros_like();
    let doc = fixture_doc();
    let mentions: HashSet<Span> = doc.gold_clusters.clone().unwrap().mentions().collect();
    let mut grads = params.zeros_like();
    doc_loss_and_grads(
        &params,
        &doc,
        &LossSelector::MentionBce {
            mentions: &mentions,
        },
        MAX_LENGTH,
        1.0,
        &mut grads,
    )
    .unwrap();
    assert!(grads.head.v_s.iter().all(|&g| g == 0.0));
    assert!(grads.head.v_e.iter().all(|&g| g == 0.0));
    assert!(grads.head.b_m.as_slice().iter().all(|&g| g == 0.0));
}

#[test]
fn epsilon_only_queries_have_zero_loss_and_zero_gradient() {
    // λ=0.4 over 2 tokens keeps a single span: its only outcome is ε,
    // P(ε)=1, so the loss is 0 and ε contributes no gradient (it has no
    // parameters)
    let params = fixture_model(15);
    let doc = tokenize("one", "Ann .");
    assert_eq!(doc.n_tokens(), 2);
    let gold = ClusterSet::default();
    let mut grads = params.zeros_like();
    let loss = doc_loss_and_grads(
        &params,
        &doc,
        &LossSelector::MarginalNll { gold: &gold },
        MAX_LENGTH,
        1.0,
        &mut grads,
    )
    .unwrap();
    assert_eq!(loss, 0.0);
    for (_, slice) in grads.param_slices() {
        assert!(slice.iter().all(|&g| g == 0.0));
    }
}
