//! TOML run configuration.
//!
//! Every section and key is optional; missing values take the defaults
//! below and unknown keys are rejected.
//!
//! ```toml
//! [model]
//! num_layers = 4
//! hidden_dim = 32
//! attention_spec = { kind = "sliding_window", window = 8, dilation = 1 }
//!
//! [data]
//! seq_len = 64
//!
//! [pretrain]
//! steps = 300
//! optimizer = { lr = 1e-3 }
//!
//! [distill]
//! alpha = 2.0
//! temperature = 2.0
//!
//! [filter]
//! min_lang_prob = 0.8
//!
//! [bench]
//! seq_lens = [128, 256, 512]
//! ```

use std::path::Path;

use eadl_core::attention::AttentionSpec;
use eadl_core::bench::BenchConfig;
use eadl_core::corpus::{FilterPolicy, MaskPolicy, MlmToyConfig, NerToyConfig};
use eadl_core::distill::{AdamWConfig, DistillRecipe};
use eadl_core::encoder::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};
use crate::io::read_text;

/// Encoder shape; the vocabulary size comes from the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_positions: usize,
    pub attention_spec: AttentionSpec,
    pub dropout_p: f32,
    pub num_tags: usize,
    pub tie_mlm_head: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            num_layers: 4,
            hidden_dim: 32,
            num_heads: 2,
            ffn_dim: 64,
            max_positions: 128,
            attention_spec: AttentionSpec::Full,
            dropout_p: 0.0,
            num_tags: eadl_core::ner::NUM_TAGS,
            tie_mlm_head: true,
        }
    }
}

impl ModelSection {
    pub fn to_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            max_positions: self.max_positions,
            num_layers: self.num_layers,
            hidden_dim: self.hidden_dim,
            num_heads: self.num_heads,
            ffn_dim: self.ffn_dim,
            attention_spec: self.attention_spec.clone(),
            dropout_p: self.dropout_p,
            num_tags: self.num_tags,
            tie_mlm_head: self.tie_mlm_head,
        }
    }
}

/// Tokenisation and packing of MLM corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub seq_len: usize,
    /// Vocabulary cap when a fresh vocabulary is built.
    pub max_words: usize,
    pub mask: MaskPolicy,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            seq_len: 64,
            max_words: 4096,
            mask: MaskPolicy::default(),
        }
    }
}

/// Plain training stages (pretraining and fine-tuning).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub steps: usize,
    pub batch_size: usize,
    pub grad_accum: usize,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    /// Fine-tuning only: sentences are cut to this many tokens.
    pub max_len: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            steps: 300,
            batch_size: 16,
            grad_accum: 1,
            seed: 0,
            optimizer: AdamWConfig {
                lr: 1e-3,
                ..AdamWConfig::default()
            },
            max_len: 128,
        }
    }
}

impl TrainSection {
    /// The recipe of an MLM-only or tagging run.
    pub fn recipe(&self) -> DistillRecipe {
        DistillRecipe {
            optimizer: self.optimizer.clone(),
            steps: self.steps,
            batch_size: self.batch_size,
            grad_accum: self.grad_accum,
            seed: self.seed,
            ..DistillRecipe::mlm_only()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub mlm: MlmToyConfig,
    pub ner: NerToyConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub data: DataSection,
    pub pretrain: TrainSection,
    pub distill: DistillRecipe,
    pub finetune: TrainSection,
    pub filter: FilterPolicy,
    pub bench: BenchConfig,
    pub synth: SynthSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> LabResult<Self> {
        toml::from_str(text).map_err(|e| LabError::Usage(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        Self::parse(&read_text(path)?).map_err(|e| match e {
            LabError::Usage(m) => LabError::Usage(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Defaults when no file is given.
    pub fn load_or_default(path: Option<&Path>) -> LabResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

/// One-line JSON rendering with object keys sorted, so equal configs always
/// log identically. Going through text keeps `f32` values in their
/// shortest form.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("config serialises");
    let v: serde_json::Value = serde_json::from_str(&text).expect("round trip");
    serde_json::to_string(&v).expect("value serialises")
}
