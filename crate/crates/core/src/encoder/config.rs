use serde::{Deserialize, Serialize};

use crate::attention::AttentionSpec;
use crate::error::{bail, Result};

fn default_num_tags() -> usize {
    9
}

fn default_true() -> bool {
    true
}

/// Shape and behaviour of an encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub max_positions: usize,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    #[serde(default)]
    pub attention_spec: AttentionSpec,
    #[serde(default)]
    pub dropout_p: f32,
    /// Width of the token-classification head.
    #[serde(default = "default_num_tags")]
    pub num_tags: usize,
    /// Share the MLM projection with the token embeddings.
    #[serde(default = "default_true")]
    pub tie_mlm_head: bool,
}

impl ModelConfig {
    /// A small config useful for tests and desk-scale runs.
    pub fn tiny(vocab_size: usize, max_positions: usize) -> Self {
        Self {
            vocab_size,
            max_positions,
            num_layers: 2,
            hidden_dim: 16,
            num_heads: 2,
            ffn_dim: 32,
            attention_spec: AttentionSpec::Full,
            dropout_p: 0.0,
            num_tags: default_num_tags(),
            tie_mlm_head: true,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 {
            bail!(Parameter, "vocab_size must be at least 1");
        }
        if self.max_positions == 0 {
            bail!(Parameter, "max_positions must be at least 1");
        }
        if self.hidden_dim == 0 || self.num_heads == 0 || self.ffn_dim == 0 {
            bail!(Parameter, "hidden_dim, num_heads and ffn_dim must be positive");
        }
        if self.hidden_dim % self.num_heads != 0 {
            bail!(
                Parameter,
                "hidden_dim {} not divisible by num_heads {}",
                self.hidden_dim,
                self.num_heads
            );
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            bail!(Parameter, "dropout_p {} outside [0, 1)", self.dropout_p);
        }
        if self.num_tags == 0 {
            bail!(Parameter, "num_tags must be at least 1");
        }
        self.attention_spec.validate()
    }

    /// Parameters of one transformer block.
    pub fn per_layer_params(&self) -> usize {
        let h = self.hidden_dim;
        let f = self.ffn_dim;
        4 * (h * h + h) + 2 * 2 * h + (h * f + f) + (f * h + h)
    }

    /// Parameters outside the embeddings and blocks: final norm, MLM head
    /// (bias, plus the projection when untied) and classification head.
    pub fn head_params(&self) -> usize {
        let h = self.hidden_dim;
        let mlm = self.vocab_size + if self.tie_mlm_head { 0 } else { h * self.vocab_size };
        2 * h + mlm + h * self.num_tags + self.num_tags
    }
}

/// Embeddings plus transformer blocks. Heads are excluded; see
/// [`ModelConfig::head_params`] and [`count_all_params`].
pub fn count_params(config: &ModelConfig) -> usize {
    let h = config.hidden_dim;
    config.vocab_size * h + config.max_positions * h + config.num_layers * config.per_layer_params()
}

/// Every stored parameter.
pub fn count_all_params(config: &ModelConfig) -> usize {
    count_params(config) + config.head_params()
}
