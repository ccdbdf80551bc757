//! Teacher oracles for distillation: a deterministic string-matching
//! stand-in and a file-backed oracle replaying stored annotations.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::corpus::read_corpus;
use crate::domain::{ClusterSet, Document, Span};
use crate::error::{CoreError, Result};
use crate::trainer::backprop::SoftTargets;

/// What a teacher produces for one document: hard clusters and the soft
/// pair logits over its own kept spans.
#[derive(Clone, Debug)]
pub struct TeacherAnnotation {
    pub clusters: ClusterSet,
    pub soft: SoftTargets,
}

pub trait TeacherOracle {
    fn annotate(&self, doc: &Document) -> Result<TeacherAnnotation>;
}

/// Soft targets over `spans` (must be sorted): +margin for same-cluster
/// pairs, −margin otherwise, so softmax mass concentrates on
/// cluster-mates and falls to ε for spans without an earlier mate.
fn soft_from_membership(
    spans: Vec<Span>,
    member: &dyn Fn(Span) -> Option<usize>,
    margin: f64,
) -> SoftTargets {
    let logits = (0..spans.len())
        .map(|j| {
            let qc = member(spans[j]);
            spans[..j]
                .iter()
                .map(|&c| match (member(c), qc) {
                    (Some(a), Some(b)) if a == b => margin,
                    _ => -margin,
                })
                .collect()
        })
        .collect();
    SoftTargets { spans, logits }
}

/// Heuristic teacher: every capitalized token is a candidate mention and
/// identical capitalized tokens corefer. Width-1 spans only.
#[derive(Clone, Debug)]
pub struct StringMatchTeacher {
    /// Magnitude of the soft-target logits.
    pub margin: f64,
}

impl Default for StringMatchTeacher {
    fn default() -> Self {
        StringMatchTeacher { margin: 4.0 }
    }
}

impl TeacherOracle for StringMatchTeacher {
    fn annotate(&self, doc: &Document) -> Result<TeacherAnnotation> {
        let mut groups: HashMap<&str, Vec<Span>> = HashMap::new();
        let mut spans = Vec::new();
        for (i, tok) in doc.tokens.iter().enumerate() {
            if tok.chars().next().is_some_and(|c| c.is_uppercase()) {
                let span = Span::new(i, i);
                spans.push(span);
                groups.entry(tok.as_str()).or_default().push(span);
            }
        }
        let mut clusters: Vec<Vec<Span>> = groups.into_values().filter(|g| g.len() >= 2).collect();
        clusters.sort();
        let cluster_set = ClusterSet::new(clusters);
        let member = |s: Span| cluster_set.cluster_of(s);
        let soft = soft_from_membership(spans, &member, self.margin);
        Ok(TeacherAnnotation {
            clusters: cluster_set,
            soft,
        })
    }
}

/// Replays annotations stored in a JSONL corpus file keyed by doc_id.
#[derive(Clone, Debug)]
pub struct FileTeacher {
    annotations: HashMap<String, ClusterSet>,
    pub margin: f64,
}

impl FileTeacher {
    pub fn load(path: &Path) -> Result<Self> {
        let docs = read_corpus(path, true)?;
        let annotations = docs
            .into_iter()
            .map(|d| (d.doc_id, d.gold_clusters.unwrap_or_default()))
            .collect();
        Ok(FileTeacher {
            annotations,
            margin: 4.0,
        })
    }
}

impl TeacherOracle for FileTeacher {
    fn annotate(&self, doc: &Document) -> Result<TeacherAnnotation> {
        let clusters = self
            .annotations
            .get(&doc.doc_id)
            .ok_or_else(|| CoreError::Config(format!("no annotation for doc {}", doc.doc_id)))?
            .clone();
        let mut spans: Vec<Span> = clusters.mentions().collect();
        spans.sort();
        let member = |s: Span| clusters.cluster_of(s);
        let soft = soft_from_membership(spans, &member, self.margin);
        Ok(TeacherAnnotation { clusters, soft })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotateReport {
    pub annotated: usize,
    pub skipped_too_long: usize,
    pub skipped_failed: usize,
}

/// Run the teacher over an unlabeled corpus. Documents over `max_tokens`
/// or failing annotation are skipped and counted, not fatal. Returns the
/// annotated documents (teacher clusters in `gold_clusters`), their
/// aligned soft targets, and the skip accounting.
pub fn annotate_with_teacher(
    teacher: &dyn TeacherOracle,
    docs: &[Document],
    max_tokens: usize,
) -> Result<(Vec<Document>, Vec<SoftTargets>, AnnotateReport)> {
    let mut annotated = Vec::new();
    let mut soft = Vec::new();
    let mut report = AnnotateReport::default();
    for doc in docs {
        if doc.n_tokens() > max_tokens {
            report.skipped_too_long += 1;
            continue;
        }
        match teacher.annotate(doc) {
            Ok(ann) => {
                let mut labeled = doc.clone();
                labeled.gold_clusters = Some(ann.clusters);
                annotated.push(labeled);
                soft.push(ann.soft);
                report.annotated += 1;
            }
            Err(_) => report.skipped_failed += 1,
        }
    }
    Ok((annotated, soft, report))
}
