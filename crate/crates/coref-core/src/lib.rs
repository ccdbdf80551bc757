//! Desk-scale coreference resolution: a start/end span-scoring head
//! over a deterministic toy encoder, trained by knowledge distillation,
//! with aggressive mention pruning, leftover batching, and standard
//! coreference metrics.

// index-based loops are the clearest idiom in the hand-rolled numerics
#![allow(clippy::needless_range_loop)]
#![allow(clippy::type_complexity)]

pub mod batching;
pub mod corpus;
pub mod decoder;
pub mod domain;
pub mod encoder;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod pruner;
pub mod scoring;
pub mod synth;
pub mod tokenizer;
pub mod trainer;

pub use batching::{padding_report, plan_dynamic_groups, plan_group, PaddingReport, Scheme};
pub use decoder::{decode_clusters, transitivity_report, TransitivityReport};
pub use domain::{ClusterSet, CorefResult, Document, Span};
pub use error::{CoreError, Result};
pub use metrics::{evaluate_corpus, CorpusEvaluation, MetricTriple};
pub use model::{ModelConfig, ModelParams};
pub use pipeline::{predict_corpus, PredictOptions};
pub use tokenizer::tokenize;
pub use trainer::{distill_pipeline, DistillOptions, DistillReport, TrainConfig, TrainPhase};
