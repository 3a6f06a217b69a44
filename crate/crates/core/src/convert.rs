//! Rewriting a checkpoint to an efficient attention pattern and a longer
//! position table.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use alloc::string::String;

use crate::attention::AttentionSpec;
use crate::corpus::Vocab;
use crate::encoder::{ModelCheckpoint, INIT_STD};
use crate::error::{bail, Result};
use crate::numcore::Tensor;
use crate::rng::{self, streams};

/// How rows past the old position table are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionExtension {
    /// `row[i] = old[i mod old_max]`.
    #[default]
    CyclicCopy,
    /// Seeded `N(0, 0.02²)` rows.
    RandomInit,
}

/// Standard deviation of freshly initialised position rows.
pub const POSITION_INIT_STD: f32 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvertPlan {
    pub target_spec: AttentionSpec,
    pub new_max_positions: usize,
    #[serde(default)]
    pub position_extension: PositionExtension,
    /// Seed for [`PositionExtension::RandomInit`].
    #[serde(default)]
    pub seed: u64,
    /// Make token 0 global for window and block patterns.
    #[serde(default = "yes")]
    pub global_first_token: bool,
}

fn yes() -> bool {
    true
}

impl ConvertPlan {
    pub fn new(target_spec: AttentionSpec, new_max_positions: usize) -> Self {
        Self {
            target_spec,
            new_max_positions,
            position_extension: PositionExtension::CyclicCopy,
            seed: 0,
            global_first_token: true,
        }
    }

    /// The spec the converted model will carry.
    pub fn effective_spec(&self) -> AttentionSpec {
        let mut spec = self.target_spec.clone();
        if self.global_first_token {
            match &mut spec {
                AttentionSpec::SlidingWindow { global, .. } => {
                    if !global.contains(&0) {
                        global.insert(0, 0);
                    }
                }
                AttentionSpec::BlockSparse { global, .. } | AttentionSpec::LocalSparseGlobal { global, .. } => {
                    *global = (*global).max(1);
                }
                AttentionSpec::Full | AttentionSpec::Nystrom { .. } => {}
            }
        }
        spec
    }
}

fn extend_positions(
    table: &Tensor,
    new_max: usize,
    policy: PositionExtension,
    seed: u64,
) -> Result<Tensor> {
    let (old_max, h) = table.dims2()?;
    if new_max < old_max {
        bail!(
            Unsupported,
            "shrinking max_positions from {old_max} to {new_max}"
        );
    }
    if new_max == old_max {
        return Ok(table.clone());
    }
    let mut data: Vec<f32> = Vec::with_capacity(new_max * h);
    data.extend_from_slice(table.data());
    match policy {
        PositionExtension::CyclicCopy => {
            for i in old_max..new_max {
                let src = i % old_max;
                data.extend_from_slice(&table.data()[src * h..(src + 1) * h]);
            }
        }
        PositionExtension::RandomInit => {
            let mut r = rng::stream(seed, streams::POSITION_INIT);
            let fresh = Tensor::randn(&[new_max - old_max, h], POSITION_INIT_STD, &mut r);
            data.extend_from_slice(fresh.data());
        }
    }
    Tensor::new(&[new_max, h], data)
}

/// Replaces the attention pattern and extends the position table. Every
/// other tensor is copied bit for bit.
pub fn convert(ckpt: &ModelCheckpoint, plan: &ConvertPlan) -> Result<ModelCheckpoint> {
    ckpt.validate()?;
    let spec = plan.effective_spec();
    spec.validate()?;
    if let AttentionSpec::Nystrom { landmarks, .. } = spec {
        if landmarks > plan.new_max_positions {
            bail!(
                Parameter,
                "{landmarks} landmarks exceed new max_positions {}",
                plan.new_max_positions
            );
        }
    }
    let mut out = ckpt.clone();
    out.weights.position_embeddings = extend_positions(
        &ckpt.weights.position_embeddings,
        plan.new_max_positions,
        plan.position_extension,
        plan.seed,
    )?;
    out.config.max_positions = plan.new_max_positions;
    out.config.attention_spec = spec;
    Ok(out)
}

/// Extends the position table only; the attention pattern is unchanged.
pub fn extend_only(
    ckpt: &ModelCheckpoint,
    new_max_positions: usize,
    policy: PositionExtension,
    seed: u64,
) -> Result<ModelCheckpoint> {
    let plan = ConvertPlan {
        target_spec: ckpt.config.attention_spec.clone(),
        new_max_positions,
        position_extension: policy,
        seed,
        global_first_token: false,
    };
    convert(ckpt, &plan)
}

/// Appends `words` missing from the checkpoint vocabulary. New embedding
/// rows are seeded `N(0, 0.02²)`, new MLM bias entries zero, and an untied
/// MLM projection gains matching seeded columns. Existing values are kept
/// bit for bit. Returns the checkpoint and the number of words added.
pub fn extend_vocab<S: AsRef<str>>(ckpt: &ModelCheckpoint, words: &[S], seed: u64) -> Result<(ModelCheckpoint, usize)> {
    ckpt.validate()?;
    let Some(tokens) = &ckpt.vocab else {
        bail!(Contract, "checkpoint carries no vocabulary to extend");
    };
    let mut vocab = Vocab::from_tokens(tokens.clone())?;
    let mut added = Vec::new();
    for w in words {
        let w = w.as_ref();
        if vocab.contains(w) || added.iter().any(|a: &String| a == w) {
            continue;
        }
        added.push(String::from(w));
    }
    if added.is_empty() {
        return Ok((ckpt.clone(), 0));
    }
    let mut all = vocab.tokens().to_vec();
    all.extend(added.iter().cloned());
    vocab = Vocab::from_tokens(all)?;

    let (old_v, new_v, h) = (ckpt.config.vocab_size, vocab.len(), ckpt.config.hidden_dim);
    let extra = new_v - old_v;
    let mut r = rng::stream(seed, streams::VOCAB_INIT);
    let mut out = ckpt.clone();
    let mut emb = ckpt.weights.token_embeddings.data().to_vec();
    emb.extend_from_slice(Tensor::randn(&[extra, h], INIT_STD, &mut r).data());
    out.weights.token_embeddings = Tensor::new(&[new_v, h], emb)?;
    let mut bias = ckpt.weights.mlm_bias.data().to_vec();
    bias.resize(new_v, 0.0);
    out.weights.mlm_bias = Tensor::new(&[new_v], bias)?;
    if let Some(w) = &ckpt.weights.mlm_weight {
        let fresh = Tensor::randn(&[h, extra], INIT_STD, &mut r);
        let mut data = Vec::with_capacity(h * new_v);
        for row in 0..h {
            data.extend_from_slice(&w.data()[row * old_v..(row + 1) * old_v]);
            data.extend_from_slice(&fresh.data()[row * extra..(row + 1) * extra]);
        }
        out.weights.mlm_weight = Some(Tensor::new(&[h, new_v], data)?);
    }
    out.config.vocab_size = new_v;
    out.vocab = Some(vocab.tokens().to_vec());
    out.validate()?;
    Ok((out, extra))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::attended_pairs;
    use crate::encoder::{ModelConfig, TokenBatch};
    use crate::Error;
    use alloc::vec;

    fn teacher() -> ModelCheckpoint {
        ModelCheckpoint::init(ModelConfig::tiny(30, 8), 3).unwrap()
    }

    #[test]
    fn identity_conversion_is_bit_identical() {
        let t = teacher();
        let out = convert(&t, &ConvertPlan::new(AttentionSpec::Full, 8)).unwrap();
        assert!(out.bit_eq(&t));
        let ext = extend_only(&t, 8, PositionExtension::RandomInit, 9).unwrap();
        assert!(ext.bit_eq(&t));
    }

    #[test]
    fn cyclic_copy_repeats_rows() {
        let t = teacher();
        let out = convert(&t, &ConvertPlan::new(AttentionSpec::window(2), 16)).unwrap();
        let h = 16;
        let old = t.weights.position_embeddings.data();
        let new = out.weights.position_embeddings.data();
        for i in 0..16 {
            assert_eq!(&new[i * h..(i + 1) * h], &old[(i % 8) * h..(i % 8 + 1) * h]);
        }
        assert_eq!(
            out.config.attention_spec,
            AttentionSpec::SlidingWindow { window: 2, dilation: 1, global: vec![0] }
        );
    }

    #[test]
    fn random_init_keeps_prefix_and_is_seeded() {
        let t = teacher();
        let plan = ConvertPlan {
            position_extension: PositionExtension::RandomInit,
            seed: 4,
            ..ConvertPlan::new(AttentionSpec::Full, 24)
        };
        let a = convert(&t, &plan).unwrap();
        let b = convert(&t, &plan).unwrap();
        assert!(a.bit_eq(&b));
        let h = 16;
        assert_eq!(&a.weights.position_embeddings.data()[..8 * h], t.weights.position_embeddings.data());
        let c = convert(&t, &ConvertPlan { seed: 5, ..plan }).unwrap();
        assert!(!a.bit_eq(&c));
    }

    #[test]
    fn non_position_weights_are_untouched() {
        let t = teacher();
        let out = convert(&t, &ConvertPlan::new(AttentionSpec::window(1), 32)).unwrap();
        for ((na, ta), (nb, tb)) in t.weights.named().iter().zip(out.weights.named().iter()) {
            assert_eq!(na, nb);
            if na != "embeddings.position" {
                assert!(ta.bit_eq(tb), "{na}");
            }
        }
    }

    #[test]
    fn errors() {
        let t = teacher();
        assert!(matches!(
            convert(&t, &ConvertPlan::new(AttentionSpec::Full, 4)),
            Err(Error::Unsupported(_))
        ));
        let ny = AttentionSpec::Nystrom { landmarks: 12, pinv_iters: 6 };
        assert!(matches!(convert(&t, &ConvertPlan::new(ny, 10)), Err(Error::Parameter(_))));
    }

    #[test]
    fn logits_survive_complete_conversion() {
        let t = teacher();
        let out = convert(&t, &ConvertPlan::new(AttentionSpec::window(8), 32)).unwrap();
        let b = TokenBatch::single(vec![3, 1, 4, 1, 5, 9, 2, 6]).unwrap();
        let before = t.predict_mlm(&b).unwrap();
        let after = out.predict_mlm(&b).unwrap();
        assert!(before.max_abs_diff(&after) < 1e-5);
        let ext = extend_only(&t, 32, PositionExtension::RandomInit, 1).unwrap();
        assert!(ext.predict_mlm(&b).unwrap().max_abs_diff(&before) < 1e-5);
    }

    #[test]
    fn cost_separation() {
        let full = AttentionSpec::Full;
        let win = ConvertPlan::new(AttentionSpec::window(8), 512).effective_spec();
        assert_eq!(attended_pairs(&full, 512).unwrap(), 16 * attended_pairs(&full, 128).unwrap());
        let r = attended_pairs(&win, 512).unwrap() as f64 / attended_pairs(&win, 128).unwrap() as f64;
        assert!(r < 5.0, "{r}");
    }

    #[test]
    fn vocab_extension_keeps_old_rows() {
        let mut t = teacher();
        t.vocab = Some(Vocab::build(&["a b c"], 26).tokens().to_vec());
        t.config.vocab_size = 7;
        t.weights = crate::encoder::ModelWeights::init(&t.config, 1).unwrap();
        let (out, n) = extend_vocab(&t, &["b", "x", "y", "x"], 3).unwrap();
        assert_eq!(n, 2);
        assert_eq!(out.config.vocab_size, 9);
        let v = Vocab::from_tokens(out.vocab.clone().unwrap()).unwrap();
        assert_eq!((v.id("x"), v.id("y"), v.id("b")), (7, 8, Vocab::build(&["a b c"], 26).id("b")));
        let h = 16;
        assert_eq!(&out.weights.token_embeddings.data()[..7 * h], t.weights.token_embeddings.data());
        assert_eq!(&out.weights.mlm_bias.data()[7..], &[0.0, 0.0]);
        assert_eq!(out.weights.layers, t.weights.layers);
        let (same, zero) = extend_vocab(&out, &["x"], 3).unwrap();
        assert_eq!(zero, 0);
        assert!(same.bit_eq(&out));
        let (again, _) = extend_vocab(&t, &["b", "x", "y"], 3).unwrap();
        assert!(again.bit_eq(&out));
    }

    #[test]
    fn vocab_extension_untied_head_and_missing_vocab() {
        let mut cfg = ModelConfig::tiny(5, 8);
        cfg.tie_mlm_head = false;
        let mut t = ModelCheckpoint::init(cfg, 2).unwrap();
        assert!(matches!(extend_vocab(&t, &["q"], 0), Err(Error::Contract(_))));
        t.vocab = Some(Vocab::from_words(&["p"]).unwrap().tokens().to_vec());
        let (out, n) = extend_vocab(&t, &["q", "r"], 0).unwrap();
        assert_eq!(n, 2);
        let (old, new) = (t.weights.mlm_weight.unwrap(), out.weights.mlm_weight.unwrap());
        assert_eq!(new.shape(), &[16, 7]);
        for row in 0..16 {
            assert_eq!(&new.data()[row * 7..row * 7 + 5], &old.data()[row * 5..row * 5 + 5]);
        }
    }
}
