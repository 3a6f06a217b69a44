//! Transformer encoder with MLM and token-classification heads.
//!
//! Blocks are pre-norm residual: `x + Attn(LN(x))` then `x + FFN(LN(x))`,
//! followed by a final norm. Position embeddings are learned and absolute.
//! The forward pass is generic over [`Ops`](crate::numcore::Ops), so the same
//! code serves inference and training.

mod config;
mod model;
mod weights;

pub use config::{count_all_params, count_params, ModelConfig};
pub use model::{
    encode, forward, mlm_logits, predict_mlm, predict_tags, token_classification_logits, EncoderOutput, Mode,
    TokenBatch,
};
pub use weights::{manifest, LayerWeights, ModelWeights, INIT_STD};

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numcore::Tensor;

/// A model at rest: config, weights and the optional vocabulary it was
/// trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub config: ModelConfig,
    pub weights: ModelWeights<Tensor>,
    pub vocab: Option<Vec<String>>,
}

/// One manifest line of a serialised checkpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Structured header of a serialised checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub manifest: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<Vec<String>>,
}

impl ModelCheckpoint {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let weights = ModelWeights::init(&config, seed)?;
        Ok(Self {
            config,
            weights,
            vocab: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.weights.validate(&self.config)
    }

    pub fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            config: self.config.clone(),
            manifest: self
                .weights
                .named()
                .into_iter()
                .map(|(name, t)| ManifestEntry {
                    name,
                    shape: t.shape().to_vec(),
                })
                .collect(),
            vocab: self.vocab.clone(),
        }
    }

    /// Bitwise equality of config, weights and vocabulary.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.config == other.config && self.vocab == other.vocab && self.weights.bit_eq(&other.weights)
    }

    pub fn predict_mlm(&self, batch: &TokenBatch) -> Result<Tensor> {
        predict_mlm(&self.config, &self.weights, batch)
    }

    pub fn predict_tags(&self, batch: &TokenBatch) -> Result<Tensor> {
        predict_tags(&self.config, &self.weights, batch)
    }
}
