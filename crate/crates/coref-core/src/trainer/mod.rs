//! Distillation training: per-phase Adam optimization of the marginal
//! antecedent likelihood, mention BCE, and soft cross-entropy losses,
//! plus the three-phase teacher→student pipeline.

pub mod backprop;
pub mod teacher;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use crate::batching::greedy_groups;
use crate::domain::{ClusterSet, Document, Span};
use crate::error::{CoreError, Result};
use crate::metrics::{evaluate_corpus, CorpusEvaluation};
use crate::model::{ModelParams, ParamGroup};
use crate::pipeline::{predict_cluster_sets, PredictOptions};

pub use backprop::{
    bce_logit, doc_loss_and_grads, gold_antecedents, marginal_nll_loss, mention_bce_loss,
    soft_distill_loss, LossSelector, SoftTargets,
};
pub use teacher::{
    annotate_with_teacher, AnnotateReport, FileTeacher, StringMatchTeacher, TeacherAnnotation,
    TeacherOracle,
};

/// Optimizer and schedule settings shared by every phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Learning rate for the phase's "fast" parameter groups.
    pub lr_head: f64,
    /// Learning rate for the phase's "slow" parameter groups.
    pub lr_encoder: f64,
    /// Learning rate used for everything in the finetune phase.
    pub lr_finetune: f64,
    pub epochs: usize,
    /// Dynamic-batching token budget during training.
    pub batch_token_budget: usize,
    /// Segment length used when encoding during training.
    pub max_length: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Softmax temperature for soft distillation.
    pub tau: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_head: 3e-4,
            lr_encoder: 1e-5,
            lr_finetune: 1e-5,
            epochs: 10,
            batch_token_budget: 2000,
            max_length: 64,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            tau: 1.0,
        }
    }
}

/// The training phases and their parameter-group learning-rate splits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainPhase {
    /// Mention scorer (fast) + encoder (slow) on teacher mention labels.
    Mentions,
    /// Antecedent scorer (fast) + mention scorer and encoder (slow) on
    /// hard teacher clusters.
    Full,
    /// Everything at the slow finetune rate, on gold clusters.
    Finetune,
    /// Same split as `Full`, on soft teacher distributions.
    Soft,
}

impl TrainPhase {
    /// Per-group learning rate for this phase.
    pub fn lr(self, group: ParamGroup, cfg: &TrainConfig) -> f64 {
        use ParamGroup::*;
        match self {
            TrainPhase::Mentions => match group {
                MentionScorer => cfg.lr_head,
                Encoder => cfg.lr_encoder,
                AntecedentScorer => 0.0,
            },
            TrainPhase::Full | TrainPhase::Soft => match group {
                AntecedentScorer => cfg.lr_head,
                MentionScorer | Encoder => cfg.lr_encoder,
            },
            TrainPhase::Finetune => cfg.lr_finetune,
        }
    }
}

/// Adam with bias correction; moments live in zero-initialized
/// `ModelParams` clones so the slice order always matches the model.
pub struct Adam {
    m: ModelParams,
    v: ModelParams,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(params: &ModelParams, cfg: &TrainConfig) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
        }
    }

    pub fn step(
        &mut self,
        params: &mut ModelParams,
        grads: &ModelParams,
        lr_of: impl Fn(ParamGroup) -> f64,
    ) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let g_slices = grads.param_slices();
        let m_slices = self.m.param_slices_mut();
        let v_slices = self.v.param_slices_mut();
        let p_slices = params.param_slices_mut();
        for ((((group, p), (_, g)), (_, m)), (_, v)) in p_slices
            .into_iter()
            .zip(g_slices)
            .zip(m_slices)
            .zip(v_slices)
        {
            let lr = lr_of(group);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// What each document is trained against in a given phase.
enum DocTargets {
    Mentions(Vec<HashSet<Span>>),
    Clusters(Vec<ClusterSet>),
    Soft(Vec<SoftTargets>),
}

impl DocTargets {
    fn selector(&self, i: usize, tau: f64) -> LossSelector<'_> {
        match self {
            DocTargets::Mentions(m) => LossSelector::MentionBce { mentions: &m[i] },
            DocTargets::Clusters(c) => LossSelector::MarginalNll { gold: &c[i] },
            DocTargets::Soft(s) => LossSelector::SoftDistill {
                targets: &s[i],
                tau,
            },
        }
    }
}

/// Mean loss and summed gradients over a batch of documents, without
/// taking an optimizer step. `gold` supplies the clusters for the
/// marginal-NLL loss.
pub fn compute_gradients<'a>(
    params: &ModelParams,
    docs: &[&Document],
    selector_for: impl Fn(usize) -> LossSelector<'a>,
    max_length: usize,
) -> Result<(f64, ModelParams)> {
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    let w = 1.0 / docs.len().max(1) as f64;
    for (i, doc) in docs.iter().enumerate() {
        loss += doc_loss_and_grads(params, doc, &selector_for(i), max_length, w, &mut grads)?;
    }
    Ok((loss * w, grads))
}

fn clusters_of(docs: &[Document]) -> Vec<ClusterSet> {
    docs.iter()
        .map(|d| d.gold_clusters.clone().unwrap_or_default())
        .collect()
}

/// Teacher mention sets clipped to the spans the model can enumerate;
/// returns the sets and the number of dropped (too-wide) mentions.
pub fn mention_targets(docs: &[Document], max_span_width: usize) -> (Vec<HashSet<Span>>, usize) {
    let mut dropped = 0;
    let sets = docs
        .iter()
        .map(|d| {
            d.gold_clusters
                .as_ref()
                .map(|cs| {
                    cs.mentions()
                        .filter(|s| {
                            let keep = s.width() <= max_span_width;
                            if !keep {
                                dropped += 1;
                            }
                            keep
                        })
                        .collect()
                })
                .unwrap_or_default()
        })
        .collect();
    (sets, dropped)
}

fn run_epochs(
    params: &mut ModelParams,
    docs: &[Document],
    targets: &DocTargets,
    phase: TrainPhase,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let mut adam = Adam::new(params, cfg);
    let mut rng = Xoshiro256StarStar::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let groups = greedy_groups(&order, |i| docs[i].n_tokens(), cfg.batch_token_budget);
        let mut epoch_loss = 0.0;
        for group in &groups {
            let mut grads = params.zeros_like();
            let w = 1.0 / group.len() as f64;
            for &i in group {
                let loss = doc_loss_and_grads(
                    params,
                    &docs[i],
                    &targets.selector(i, cfg.tau),
                    cfg.max_length,
                    w,
                    &mut grads,
                )?;
                epoch_loss += loss;
            }
            if grads
                .param_slices()
                .iter()
                .any(|(_, s)| s.iter().any(|v| !v.is_finite()))
            {
                return Err(CoreError::Training(format!(
                    "non-finite gradient in epoch {epoch}"
                )));
            }
            adam.step(params, &grads, |g| phase.lr(g, cfg));
        }
        let mean = if docs.is_empty() {
            0.0
        } else {
            epoch_loss / docs.len() as f64
        };
        if !mean.is_finite() {
            return Err(CoreError::Training(format!(
                "training diverged: mean loss {mean} in epoch {epoch}"
            )));
        }
        trace.push(mean);
    }
    Ok(trace)
}

/// One training phase over annotated documents (clusters read from
/// `gold_clusters`, whether gold or teacher-produced). Returns the
/// per-epoch mean loss trace.
pub fn train_phase(
    params: &mut ModelParams,
    docs: &[Document],
    phase: TrainPhase,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let targets = match phase {
        TrainPhase::Mentions => {
            DocTargets::Mentions(mention_targets(docs, params.max_span_width).0)
        }
        TrainPhase::Full | TrainPhase::Finetune => DocTargets::Clusters(clusters_of(docs)),
        TrainPhase::Soft => {
            return Err(CoreError::Config(
                "soft phase needs teacher targets; use train_soft".into(),
            ))
        }
    };
    run_epochs(params, docs, &targets, phase, cfg)
}

/// Soft-distillation training against precomputed teacher targets,
/// aligned with `docs` by index.
pub fn train_soft(
    params: &mut ModelParams,
    docs: &[Document],
    targets: Vec<SoftTargets>,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    if targets.len() != docs.len() {
        return Err(CoreError::Contract(
            "one soft-target set per document required".into(),
        ));
    }
    run_epochs(
        params,
        docs,
        &DocTargets::Soft(targets),
        TrainPhase::Soft,
        cfg,
    )
}

/// Per-phase epoch counts and the teacher-side document cap for the full
/// distillation pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillOptions {
    pub mention_epochs: usize,
    pub full_epochs: usize,
    pub finetune_epochs: usize,
    /// Documents longer than this are skipped at annotation time.
    pub teacher_max_tokens: usize,
    /// Use soft teacher distributions instead of hard clusters in the
    /// second phase.
    pub soft: bool,
}

impl Default for DistillOptions {
    fn default() -> Self {
        DistillOptions {
            mention_epochs: 10,
            full_epochs: 10,
            finetune_epochs: 5,
            teacher_max_tokens: 4096,
            soft: false,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DistillReport {
    pub annotated_docs: usize,
    pub skipped_too_long: usize,
    pub skipped_failed: usize,
    pub dropped_wide_mentions: usize,
    pub loss_mentions: Vec<f64>,
    pub loss_full: Vec<f64>,
    pub loss_finetune: Vec<f64>,
    pub dev_eval: Option<CorpusEvaluation>,
}

/// The three-phase pipeline: annotate the unlabeled corpus with the
/// teacher, train the mention scorer, train the antecedent scorer on the
/// teacher's (hard or soft) signal, then finetune on gold if available.
/// Evaluates on `dev` (against its gold clusters) at the end.
pub fn distill_pipeline(
    params: &mut ModelParams,
    teacher: &dyn TeacherOracle,
    unlabeled: &[Document],
    gold: Option<&[Document]>,
    dev: Option<&[Document]>,
    cfg: &TrainConfig,
    opts: &DistillOptions,
) -> Result<DistillReport> {
    let (annotated, soft_targets, annotate_report) =
        annotate_with_teacher(teacher, unlabeled, opts.teacher_max_tokens)?;
    let mut report = DistillReport {
        annotated_docs: annotated.len(),
        skipped_too_long: annotate_report.skipped_too_long,
        skipped_failed: annotate_report.skipped_failed,
        ..Default::default()
    };

    let (mention_sets, dropped) = mention_targets(&annotated, params.max_span_width);
    report.dropped_wide_mentions = dropped;
    let phase_cfg = |epochs| TrainConfig { epochs, ..*cfg };

    report.loss_mentions = run_epochs(
        params,
        &annotated,
        &DocTargets::Mentions(mention_sets),
        TrainPhase::Mentions,
        &phase_cfg(opts.mention_epochs),
    )?;

    report.loss_full = if opts.soft {
        train_soft(
            params,
            &annotated,
            soft_targets,
            &phase_cfg(opts.full_epochs),
        )?
    } else {
        run_epochs(
            params,
            &annotated,
            &DocTargets::Clusters(clusters_of(&annotated)),
            TrainPhase::Full,
            &phase_cfg(opts.full_epochs),
        )?
    };

    if let Some(gold) = gold {
        report.loss_finetune = run_epochs(
            params,
            gold,
            &DocTargets::Clusters(clusters_of(gold)),
            TrainPhase::Finetune,
            &phase_cfg(opts.finetune_epochs),
        )?;
    }

    if let Some(dev) = dev {
        let predict_opts = PredictOptions {
            max_length: cfg.max_length,
            ..Default::default()
        };
        let predicted = predict_cluster_sets(params, dev, &predict_opts)?;
        let gold_sets = clusters_of(dev);
        report.dev_eval = Some(evaluate_corpus(gold_sets.iter().zip(&predicted)));
    }

    Ok(report)
}
