//! The complete trainable state and its JSON model file.
//!
//! Model file layout (format_version 1): a single JSON object with the
//! scalar fields `format_version`, `vocab_size`, `dim`, `proj_dim`,
//! `max_span_width`, `lambda`, `seed`, and every weight matrix as a
//! nested float array (`embedding`, `mix_weights`, `mix_bias`, `w_s`,
//! `b_s`, `w_e`, `b_e`, `v_s`, `v_e`, `b_m`, `u_s`, `c_s`, `u_e`,
//! `c_e`, `b_ss`, `b_se`, `b_es`, `b_ee`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{init_encoder, EncoderParams};
use crate::error::{CoreError, Result};
use crate::pruner::PruneConfig;
use crate::scoring::{init_head, HeadParams};

pub const FORMAT_VERSION: u32 = 1;

/// Scalar hyperparameters fixing the model's shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub proj_dim: usize,
    pub max_span_width: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 4096,
            dim: 32,
            proj_dim: 32,
            max_span_width: 10,
            lambda: 0.25,
            seed: 0,
        }
    }
}

/// Encoder plus scoring head: everything training updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub format_version: u32,
    pub max_span_width: usize,
    pub lambda: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub encoder: EncoderParams,
    #[serde(flatten)]
    pub head: HeadParams,
}

/// Optimizer parameter groups with distinct learning rates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Encoder,
    MentionScorer,
    AntecedentScorer,
}

impl ModelParams {
    pub fn init(cfg: &ModelConfig) -> Self {
        ModelParams {
            format_version: FORMAT_VERSION,
            max_span_width: cfg.max_span_width,
            lambda: cfg.lambda,
            seed: cfg.seed,
            encoder: init_encoder(cfg.seed, cfg.vocab_size, cfg.dim),
            // distinct stream for the head
            head: init_head(cfg.seed ^ 0x9e37_79b9_7f4a_7c15, cfg.dim, cfg.proj_dim),
        }
    }

    /// Same shapes, all parameters zero. Used for gradients and
    /// optimizer moments.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, slice) in z.param_slices_mut() {
            slice.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    pub fn prune_config(&self) -> PruneConfig {
        PruneConfig {
            lambda: self.lambda,
            max_span_width: self.max_span_width,
            max_antecedents: None,
        }
    }

    /// Every parameter tensor as a flat slice, in a fixed order shared
    /// by gradients and optimizer state.
    pub fn param_slices(&self) -> Vec<(ParamGroup, &[f64])> {
        use ParamGroup::*;
        let e = &self.encoder;
        let h = &self.head;
        vec![
            (Encoder, e.embedding.as_slice()),
            (Encoder, e.mix_weights.as_slice()),
            (Encoder, &e.mix_bias),
            (MentionScorer, h.w_s.as_slice()),
            (MentionScorer, &h.b_s),
            (MentionScorer, h.w_e.as_slice()),
            (MentionScorer, &h.b_e),
            (MentionScorer, &h.v_s),
            (MentionScorer, &h.v_e),
            (MentionScorer, h.b_m.as_slice()),
            (AntecedentScorer, h.u_s.as_slice()),
            (AntecedentScorer, &h.c_s),
            (AntecedentScorer, h.u_e.as_slice()),
            (AntecedentScorer, &h.c_e),
            (AntecedentScorer, h.b_ss.as_slice()),
            (AntecedentScorer, h.b_se.as_slice()),
            (AntecedentScorer, h.b_es.as_slice()),
            (AntecedentScorer, h.b_ee.as_slice()),
        ]
    }

    pub fn param_slices_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        use ParamGroup::*;
        let ModelParams { encoder, head, .. } = self;
        vec![
            (Encoder, encoder.embedding.as_mut_slice()),
            (Encoder, encoder.mix_weights.as_mut_slice()),
            (Encoder, &mut encoder.mix_bias),
            (MentionScorer, head.w_s.as_mut_slice()),
            (MentionScorer, &mut head.b_s),
            (MentionScorer, head.w_e.as_mut_slice()),
            (MentionScorer, &mut head.b_e),
            (MentionScorer, &mut head.v_s),
            (MentionScorer, &mut head.v_e),
            (MentionScorer, head.b_m.as_mut_slice()),
            (AntecedentScorer, head.u_s.as_mut_slice()),
            (AntecedentScorer, &mut head.c_s),
            (AntecedentScorer, head.u_e.as_mut_slice()),
            (AntecedentScorer, &mut head.c_e),
            (AntecedentScorer, head.b_ss.as_mut_slice()),
            (AntecedentScorer, head.b_se.as_mut_slice()),
            (AntecedentScorer, head.b_es.as_mut_slice()),
            (AntecedentScorer, head.b_ee.as_mut_slice()),
        ]
    }

    pub fn n_params(&self) -> usize {
        self.param_slices().iter().map(|(_, s)| s.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(CoreError::Config(format!(
                "unsupported model format_version {}",
                self.format_version
            )));
        }
        let d = self.encoder.dim;
        let p = self.head.proj_dim;
        let dims_ok = self.encoder.embedding.rows() == self.encoder.vocab_size
            && self.encoder.embedding.cols() == d
            && self.encoder.mix_weights.rows() == d
            && self.encoder.mix_weights.cols() == 3 * d
            && self.encoder.mix_bias.len() == d
            && self.head.w_s.rows() == p
            && self.head.w_s.cols() == d
            && self.head.b_m.rows() == p
            && self.head.b_m.cols() == p;
        if !dims_ok {
            return Err(CoreError::Config("inconsistent model dimensions".into()));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(CoreError::Config(format!(
                "lambda {} not in (0, 1]",
                self.lambda
            )));
        }
        if self.max_span_width < 1 {
            return Err(CoreError::Config("max_span_width must be >= 1".into()));
        }
        for (_, slice) in self.param_slices() {
            if slice.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::Config("non-finite model parameter".into()));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| CoreError::Config(format!("model serialization failed: {e}")))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = fs::read_to_string(path)?;
        let model: ModelParams = serde_json::from_str(&json)
            .map_err(|e| CoreError::format(0, format!("model file: {e}")))?;
        model.validate()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 32,
            dim: 6,
            proj_dim: 4,
            max_span_width: 5,
            lambda: 0.25,
            seed: 42,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = ModelParams::init(&small_cfg());
        let b = ModelParams::init(&small_cfg());
        assert_eq!(a, b);
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = ModelParams::init(&small_cfg());
        model.save(&path).unwrap();
        let loaded = ModelParams::load(&path).unwrap();
        assert_eq!(model, loaded);
    }

    #[test]
    fn model_file_has_the_documented_fields() {
        let model = ModelParams::init(&small_cfg());
        let json: serde_json::Value = serde_json::to_value(&model).unwrap();
        for field in [
            "format_version",
            "vocab_size",
            "dim",
            "proj_dim",
            "max_span_width",
            "lambda",
            "seed",
            "embedding",
            "mix_weights",
            "mix_bias",
            "w_s",
            "b_ss",
            "b_ee",
        ] {
            assert!(json.get(field).is_some(), "missing field {field}");
        }
        assert!(json["embedding"].is_array());
    }

    #[test]
    fn bad_format_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut model = ModelParams::init(&small_cfg());
        model.format_version = 99;
        model.save(&path).unwrap();
        assert!(ModelParams::load(&path).is_err());
    }

    #[test]
    fn param_slices_cover_the_whole_model() {
        let model = ModelParams::init(&small_cfg());
        let cfg = small_cfg();
        let d = cfg.dim;
        let p = cfg.proj_dim;
        let expect = cfg.vocab_size * d + d * 3 * d + d        // encoder
            + 2 * (p * d + p) + 2 * p + p * p                  // mention scorer
            + 2 * (p * d + p) + 4 * p * p; // antecedent scorer
        assert_eq!(model.n_params(), expect);
    }
}
