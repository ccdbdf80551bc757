//! `coref` — command-line pipeline: synthetic corpus generation, teacher
//! annotation, training/distillation, prediction, evaluation, and
//! batching/transitivity reports.
//!
//! All reports go to stdout as JSON; logs go to stderr (RUST_LOG).
//! Exit codes: 0 success, 2 I/O, 3 malformed input, 4 training failure,
//! 1 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use coref_core::batching::{padding_report, Scheme};
use coref_core::corpus::{read_corpus, read_predictions, write_corpus, write_predictions};
use coref_core::domain::{ClusterSet, Document, Span};
use coref_core::error::{CoreError, Result};
use coref_core::metrics::{avg_f1, b_cubed, ceaf_phi4, evaluate_corpus, muc};
use coref_core::model::{ModelConfig, ModelParams};
use coref_core::pipeline::{analyze_transitivity, predict_corpus, PredictOptions};
use coref_core::synth::{generate_splits, SynthConfig};
use coref_core::trainer::{
    annotate_with_teacher, distill_pipeline, train_phase, train_soft, DistillOptions, FileTeacher,
    StringMatchTeacher, TeacherOracle, TrainConfig, TrainPhase,
};

#[derive(Parser)]
#[command(name = "coref", version, about = "Desk-scale coreference pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic corpus with train/dev/test splits.
    GenSynthetic(GenSyntheticArgs),
    /// Annotate a corpus with a teacher's clusters.
    Annotate(AnnotateArgs),
    /// Train one phase on a (gold- or teacher-) labeled corpus.
    Train(TrainArgs),
    /// Run the full distillation pipeline: annotate, mentions, full, finetune.
    Distill(DistillArgs),
    /// Predict coreference clusters for a corpus.
    Predict(PredictArgs),
    /// Score predictions against gold clusters.
    Evaluate(EvaluateArgs),
    /// Report padding accounting for both batching schemes.
    BatchStats(BatchStatsArgs),
    /// Report the fraction of negative pairwise scores inside predicted clusters.
    AnalyzeTransitivity(AnalyzeArgs),
}

#[derive(Args)]
struct GenSyntheticArgs {
    /// Directory receiving train.jsonl, dev.jsonl, test.jsonl, manifest.json.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 500)]
    n_train: usize,
    #[arg(long, default_value_t = 50)]
    n_dev: usize,
    #[arg(long, default_value_t = 50)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    min_tokens: usize,
    #[arg(long, default_value_t = 60)]
    max_tokens: usize,
    /// Number of distinct entity names to draw on (2–20).
    #[arg(long, default_value_t = 20)]
    entity_pool: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum TeacherKind {
    StringMatch,
    File,
}

#[derive(Args)]
struct TeacherArgs {
    #[arg(long, value_enum, default_value = "string-match")]
    teacher: TeacherKind,
    /// Annotation corpus for `--teacher file` (clusters keyed by doc_id).
    #[arg(long)]
    teacher_file: Option<PathBuf>,
    /// Logit margin for the teacher's soft targets.
    #[arg(long, default_value_t = 4.0)]
    teacher_margin: f64,
    /// Documents longer than this are skipped at annotation time.
    #[arg(long, default_value_t = 4096)]
    teacher_max_tokens: usize,
}

impl TeacherArgs {
    fn build(&self) -> Result<Box<dyn TeacherOracle>> {
        match self.teacher {
            TeacherKind::StringMatch => Ok(Box::new(StringMatchTeacher {
                margin: self.teacher_margin,
            })),
            TeacherKind::File => {
                let path = self.teacher_file.as_ref().ok_or_else(|| {
                    CoreError::Config("--teacher file requires --teacher-file".into())
                })?;
                let mut t = FileTeacher::load(path)?;
                t.margin = self.teacher_margin;
                Ok(Box::new(t))
            }
        }
    }
}

#[derive(Args)]
struct AnnotateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output corpus with the teacher's clusters filled in.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    teacher: TeacherArgs,
    #[arg(long)]
    limit_docs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Mentions,
    Full,
    Finetune,
    Soft,
}

#[derive(Args)]
struct ModelInitArgs {
    #[arg(long, default_value_t = 4096)]
    vocab_size: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 32)]
    proj_dim: usize,
    /// Maximum mention width in tokens (W).
    #[arg(long, default_value_t = 10)]
    max_span_width: usize,
    /// Mention pruning keeps ⌈λT⌉ spans per document.
    #[arg(long, default_value_t = 0.25)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
}

impl ModelInitArgs {
    fn config(&self) -> ModelConfig {
        ModelConfig {
            vocab_size: self.vocab_size,
            dim: self.dim,
            proj_dim: self.proj_dim,
            max_span_width: self.max_span_width,
            lambda: self.lambda,
            seed: self.model_seed,
        }
    }
}

#[derive(Args)]
struct TrainHyperArgs {
    #[arg(long, default_value_t = 3e-4)]
    lr_head: f64,
    #[arg(long, default_value_t = 1e-5)]
    lr_encoder: f64,
    #[arg(long, default_value_t = 1e-5)]
    lr_finetune: f64,
    #[arg(long, default_value_t = 2000)]
    batch_token_budget: usize,
    /// Segment length used when encoding during training.
    #[arg(long, default_value_t = 64)]
    train_max_length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Softmax temperature for soft distillation.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
}

impl TrainHyperArgs {
    fn config(&self, epochs: usize) -> TrainConfig {
        TrainConfig {
            lr_head: self.lr_head,
            lr_encoder: self.lr_encoder,
            lr_finetune: self.lr_finetune,
            epochs,
            batch_token_budget: self.batch_token_budget,
            max_length: self.train_max_length,
            seed: self.seed,
            tau: self.tau,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Labeled corpus (gold or teacher clusters, depending on the phase).
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    phase: PhaseArg,
    /// Existing model to continue from; omitted → fresh initialization.
    #[arg(long)]
    model_in: Option<PathBuf>,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[command(flatten)]
    init: ModelInitArgs,
    #[command(flatten)]
    hyper: TrainHyperArgs,
    /// For `--phase soft`: teacher providing the soft targets.
    #[command(flatten)]
    teacher: TeacherArgs,
    #[arg(long)]
    limit_docs: Option<usize>,
}

#[derive(Args)]
struct DistillArgs {
    /// Unlabeled corpus the teacher annotates.
    #[arg(long)]
    unlabeled: PathBuf,
    /// Gold corpus for the finetune phase.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Gold corpus evaluated after training.
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    model_in: Option<PathBuf>,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long, default_value_t = 5)]
    mention_epochs: usize,
    #[arg(long, default_value_t = 10)]
    full_epochs: usize,
    #[arg(long, default_value_t = 5)]
    finetune_epochs: usize,
    /// Distill against the teacher's score distributions instead of its
    /// hard clusters.
    #[arg(long)]
    soft: bool,
    #[command(flatten)]
    init: ModelInitArgs,
    #[command(flatten)]
    hyper: TrainHyperArgs,
    #[command(flatten)]
    teacher: TeacherArgs,
    #[arg(long)]
    limit_docs: Option<usize>,
}

#[derive(Args)]
struct PredictOptionArgs {
    /// Segment length M (64 desk-scale; 512 for production-scale plans).
    #[arg(long, default_value_t = 64)]
    max_length: usize,
    #[arg(long, default_value_t = 10_000)]
    max_tokens_in_batch: usize,
    #[arg(long, value_enum, default_value = "leftover")]
    scheme: SchemeArg,
    /// Override the model's pruning fraction λ.
    #[arg(long)]
    lambda: Option<f64>,
    /// Override the model's maximum mention width W.
    #[arg(long)]
    max_span_width: Option<usize>,
    /// Cap on antecedent candidates per query span.
    #[arg(long)]
    max_antecedents: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Vanilla,
    Leftover,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Scheme {
        match s {
            SchemeArg::Vanilla => Scheme::Vanilla,
            SchemeArg::Leftover => Scheme::Leftover,
        }
    }
}

impl PredictOptionArgs {
    fn options(&self) -> PredictOptions {
        PredictOptions {
            max_length: self.max_length,
            max_tokens_in_batch: self.max_tokens_in_batch,
            scheme: self.scheme.into(),
            lambda: self.lambda,
            max_span_width: self.max_span_width,
            max_antecedents: self.max_antecedents,
        }
    }
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Output predictions (JSONL).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    opts: PredictOptionArgs,
    #[arg(long)]
    limit_docs: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Gold corpus (JSONL with clusters).
    #[arg(long)]
    gold: PathBuf,
    /// Predictions (JSONL from `predict`).
    #[arg(long)]
    pred: PathBuf,
}

#[derive(Args)]
struct BatchStatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 64)]
    max_length: usize,
    #[arg(long, default_value_t = 10_000)]
    max_tokens_in_batch: usize,
    #[arg(long)]
    limit_docs: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    opts: PredictOptionArgs,
    #[arg(long)]
    limit_docs: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                CoreError::Io(_) => 2,
                CoreError::Format { .. } => 3,
                CoreError::Training(_) => 4,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn emit<T: Serialize>(value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CoreError::Config(format!("report serialization failed: {e}")))?;
    println!("{json}");
    Ok(())
}

fn load_corpus(path: &Path, allow_singletons: bool, limit: Option<usize>) -> Result<Vec<Document>> {
    let mut docs = read_corpus(path, allow_singletons)?;
    if let Some(n) = limit {
        docs.truncate(n);
    }
    log::info!("loaded {} documents from {}", docs.len(), path.display());
    Ok(docs)
}

fn load_or_init_model(model_in: &Option<PathBuf>, init: &ModelInitArgs) -> Result<ModelParams> {
    match model_in {
        Some(path) => ModelParams::load(path),
        None => Ok(ModelParams::init(&init.config())),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::Annotate(a) => annotate(a),
        Command::Train(a) => train(a),
        Command::Distill(a) => distill(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::BatchStats(a) => batch_stats(a),
        Command::AnalyzeTransitivity(a) => analyze(a),
    }
}

fn gen_synthetic(a: GenSyntheticArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_docs: 0, // per-split counts are passed below
        seed: a.seed,
        min_tokens: a.min_tokens,
        max_tokens: a.max_tokens,
        entity_pool: a.entity_pool,
    };
    let (train, dev, test, manifest) = generate_splits(&cfg, a.n_train, a.n_dev, a.n_test);
    std::fs::create_dir_all(&a.out_dir)?;
    write_corpus(&a.out_dir.join("train.jsonl"), &train)?;
    write_corpus(&a.out_dir.join("dev.jsonl"), &dev)?;
    write_corpus(&a.out_dir.join("test.jsonl"), &test)?;
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CoreError::Config(format!("manifest serialization failed: {e}")))?;
    std::fs::write(a.out_dir.join("manifest.json"), manifest_json + "\n")?;
    emit(&manifest)
}

fn annotate(a: AnnotateArgs) -> Result<()> {
    let docs = load_corpus(&a.corpus, true, a.limit_docs)?;
    let teacher = a.teacher.build()?;
    let (annotated, _, report) =
        annotate_with_teacher(teacher.as_ref(), &docs, a.teacher.teacher_max_tokens)?;
    write_corpus(&a.out, &annotated)?;
    emit(&report)
}

#[derive(Serialize)]
struct TrainCommandReport {
    phase: String,
    documents: usize,
    epoch_mean_loss: Vec<f64>,
}

fn train(a: TrainArgs) -> Result<()> {
    let docs = load_corpus(&a.corpus, true, a.limit_docs)?;
    let mut model = load_or_init_model(&a.model_in, &a.init)?;
    let cfg = a.hyper.config(a.epochs);
    let (phase_name, losses) = match a.phase {
        PhaseArg::Mentions => (
            "mentions",
            train_phase(&mut model, &docs, TrainPhase::Mentions, &cfg)?,
        ),
        PhaseArg::Full => (
            "full",
            train_phase(&mut model, &docs, TrainPhase::Full, &cfg)?,
        ),
        PhaseArg::Finetune => (
            "finetune",
            train_phase(&mut model, &docs, TrainPhase::Finetune, &cfg)?,
        ),
        PhaseArg::Soft => {
            let teacher = a.teacher.build()?;
            let (annotated, soft, _) =
                annotate_with_teacher(teacher.as_ref(), &docs, a.teacher.teacher_max_tokens)?;
            ("soft", train_soft(&mut model, &annotated, soft, &cfg)?)
        }
    };
    model.save(&a.model_out)?;
    emit(&TrainCommandReport {
        phase: phase_name.to_string(),
        documents: docs.len(),
        epoch_mean_loss: losses,
    })
}

fn distill(a: DistillArgs) -> Result<()> {
    let unlabeled = load_corpus(&a.unlabeled, true, a.limit_docs)?;
    let gold = a
        .gold
        .as_ref()
        .map(|p| load_corpus(p, true, None))
        .transpose()?;
    let dev = a
        .dev
        .as_ref()
        .map(|p| load_corpus(p, true, None))
        .transpose()?;
    let mut model = load_or_init_model(&a.model_in, &a.init)?;
    let cfg = a.hyper.config(0); // per-phase epochs come from DistillOptions
    let opts = DistillOptions {
        mention_epochs: a.mention_epochs,
        full_epochs: a.full_epochs,
        finetune_epochs: a.finetune_epochs,
        teacher_max_tokens: a.teacher.teacher_max_tokens,
        soft: a.soft,
    };
    let teacher = a.teacher.build()?;
    let report = distill_pipeline(
        &mut model,
        teacher.as_ref(),
        &unlabeled,
        gold.as_deref(),
        dev.as_deref(),
        &cfg,
        &opts,
    )?;
    model.save(&a.model_out)?;
    emit(&report)
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = ModelParams::load(&a.model)?;
    let docs = load_corpus(&a.corpus, true, a.limit_docs)?;
    let results = predict_corpus(&model, &docs, &a.opts.options())?;
    write_predictions(&a.out, &results)?;
    log::info!("wrote {} predictions to {}", results.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct DocEvaluation {
    doc_id: String,
    muc_f1: f64,
    b3_f1: f64,
    ceaf_phi4_f1: f64,
    avg_f1: f64,
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let gold_docs = load_corpus(&a.gold, true, None)?;
    let preds = read_predictions(&a.pred)?;
    let mut by_id: std::collections::HashMap<&str, ClusterSet> = std::collections::HashMap::new();
    for (i, p) in preds.iter().enumerate() {
        let clusters = p.clusters_tokens.as_ref().ok_or_else(|| {
            CoreError::format(i + 1, "prediction record is missing clusters_tokens")
        })?;
        let cs = ClusterSet::new(
            clusters
                .iter()
                .map(|c| c.iter().map(|&(s, e)| Span::new(s, e)).collect())
                .collect(),
        );
        by_id.insert(&p.doc_id, cs);
    }
    let mut pairs = Vec::with_capacity(gold_docs.len());
    let mut per_document = Vec::with_capacity(gold_docs.len());
    for doc in &gold_docs {
        let key = doc.gold_clusters.clone().ok_or_else(|| {
            CoreError::Config(format!(
                "gold corpus document {} has no clusters",
                doc.doc_id
            ))
        })?;
        let response = by_id.remove(doc.doc_id.as_str()).unwrap_or_default();
        let (m, b, c) = (
            muc(&key, &response),
            b_cubed(&key, &response),
            ceaf_phi4(&key, &response),
        );
        per_document.push(DocEvaluation {
            doc_id: doc.doc_id.clone(),
            muc_f1: m.f1,
            b3_f1: b.f1,
            ceaf_phi4_f1: c.f1,
            avg_f1: avg_f1(&m, &b, &c),
        });
        pairs.push((key, response));
    }
    let corpus = evaluate_corpus(pairs.iter().map(|(k, r)| (k, r)));

    #[derive(Serialize)]
    struct Report {
        corpus: coref_core::metrics::CorpusEvaluation,
        per_document: Vec<DocEvaluation>,
    }
    emit(&Report {
        corpus,
        per_document,
    })
}

fn batch_stats(a: BatchStatsArgs) -> Result<()> {
    let docs = load_corpus(&a.corpus, true, a.limit_docs)?;
    let reports: Vec<_> = [Scheme::Vanilla, Scheme::Leftover]
        .into_iter()
        .map(|scheme| padding_report(&docs, a.max_length, a.max_tokens_in_batch, scheme))
        .collect();
    emit(&reports)
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let model = ModelParams::load(&a.model)?;
    let docs = load_corpus(&a.corpus, true, a.limit_docs)?;
    let report = analyze_transitivity(&model, &docs, &a.opts.options())?;
    emit(&report)
}
