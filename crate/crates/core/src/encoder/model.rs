use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{ModelConfig, ModelWeights};
use crate::attention::{self, build_layer_mask, AttentionMask, AttentionSpec};
use crate::error::{bail, Error, Result};
use crate::numcore::{Eager, Ops, Tensor};

/// Token ids of `batch` sequences padded to `seq_len`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBatch {
    pub ids: Vec<u32>,
    pub batch: usize,
    pub seq_len: usize,
    /// Real length of each sequence; `None` means all are full.
    pub lengths: Option<Vec<usize>>,
}

impl TokenBatch {
    pub fn new(ids: Vec<u32>, batch: usize, seq_len: usize) -> Result<Self> {
        if ids.len() != batch * seq_len {
            bail!(Dimension, "{} ids for a {batch}×{seq_len} batch", ids.len());
        }
        if seq_len == 0 || batch == 0 {
            bail!(Input, "empty token batch");
        }
        Ok(Self {
            ids,
            batch,
            seq_len,
            lengths: None,
        })
    }

    pub fn single(ids: Vec<u32>) -> Result<Self> {
        let n = ids.len();
        Self::new(ids, 1, n)
    }

    /// Pads `seqs` with `pad` to the longest one.
    pub fn padded(seqs: &[Vec<u32>], pad: u32) -> Result<Self> {
        let seq_len = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(seqs.len() * seq_len);
        for s in seqs {
            ids.extend_from_slice(s);
            ids.extend(core::iter::repeat(pad).take(seq_len - s.len()));
        }
        let mut b = Self::new(ids, seqs.len(), seq_len)?;
        if seqs.iter().any(|s| s.is_empty()) {
            bail!(Input, "empty sequence in batch");
        }
        if seqs.iter().any(|s| s.len() != seq_len) {
            b.lengths = Some(seqs.iter().map(Vec::len).collect());
        }
        Ok(b)
    }

    pub fn len_of(&self, b: usize) -> usize {
        self.lengths.as_ref().map_or(self.seq_len, |l| l[b])
    }

    /// Whether flat row `row` is a real (non-padding) position.
    pub fn is_real(&self, row: usize) -> bool {
        row % self.seq_len < self.len_of(row / self.seq_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Hidden states as `[B·L × hidden]` rows: the output of every block and the
/// normalised final states.
#[derive(Debug, Clone)]
pub struct EncoderOutput<T> {
    pub layers: Vec<T>,
    pub final_hidden: T,
}

struct MaskCache {
    spec: AttentionSpec,
    entries: Vec<((usize, usize), Arc<AttentionMask>)>,
}

impl MaskCache {
    fn get(&mut self, len: usize, layer: usize) -> Result<Arc<AttentionMask>> {
        let layer_key = if matches!(self.spec, AttentionSpec::BlockSparse { .. }) {
            layer
        } else {
            0
        };
        if let Some((_, m)) = self.entries.iter().find(|(k, _)| *k == (len, layer_key)) {
            return Ok(m.clone());
        }
        let m = Arc::new(build_layer_mask(&self.spec, len, layer_key)?);
        self.entries.push(((len, layer_key), m.clone()));
        Ok(m)
    }
}

fn check_batch(config: &ModelConfig, batch: &TokenBatch) -> Result<()> {
    if batch.seq_len > config.max_positions {
        return Err(Error::Length {
            len: batch.seq_len,
            max: config.max_positions,
        });
    }
    if let Some(l) = &batch.lengths {
        if l.len() != batch.batch || l.iter().any(|&n| n == 0 || n > batch.seq_len) {
            bail!(Input, "sequence lengths {l:?} inconsistent with batch");
        }
    }
    if let Some(&bad) = batch.ids.iter().find(|&&t| t as usize >= config.vocab_size) {
        bail!(Input, "token id {bad} outside vocabulary of {}", config.vocab_size);
    }
    Ok(())
}

fn dense<O: Ops>(ops: &mut O, x: &O::T, w: &O::T, b: &O::T) -> Result<O::T> {
    let y = ops.matmul(x, w)?;
    ops.add_row(&y, b)
}

fn maybe_dropout<O: Ops>(ops: &mut O, x: O::T, p: f32, mode: Mode) -> Result<O::T> {
    if mode == Mode::Train && p > 0.0 {
        ops.dropout(&x, p)
    } else {
        Ok(x)
    }
}

/// Runs the pre-norm encoder stack.
pub fn forward<O: Ops>(
    ops: &mut O,
    config: &ModelConfig,
    weights: &ModelWeights<O::T>,
    batch: &TokenBatch,
    mode: Mode,
) -> Result<EncoderOutput<O::T>> {
    check_batch(config, batch)?;
    let (bsz, len, h) = (batch.batch, batch.seq_len, config.hidden_dim);
    let heads = config.num_heads;
    let dh = config.head_dim();
    let scale = attention::default_scale(dh);
    let rows = bsz * len;

    let positions: Vec<u32> = (0..rows).map(|r| (r % len) as u32).collect();
    let tok = ops.embedding(&weights.token_embeddings, &batch.ids)?;
    let pos = ops.embedding(&weights.position_embeddings, &positions)?;
    let emb = ops.add(&tok, &pos)?;
    drop((tok, pos));
    let emb = maybe_dropout(ops, emb, config.dropout_p, mode)?;

    let mut cache = MaskCache {
        spec: config.attention_spec.clone(),
        entries: Vec::new(),
    };
    let mut layers: Vec<O::T> = Vec::with_capacity(config.num_layers);
    for (li, lw) in weights.layers.iter().enumerate() {
        let x = layers.last().unwrap_or(&emb);
        let a = ops.layer_norm(x, &lw.ln1_gamma, &lw.ln1_beta)?;
        let q = dense(ops, &a, &lw.q_weight, &lw.q_bias)?;
        let k = dense(ops, &a, &lw.k_weight, &lw.k_bias)?;
        let v = dense(ops, &a, &lw.v_weight, &lw.v_bias)?;
        drop(a);
        let mut parts: Vec<(O::T, usize, usize)> = Vec::with_capacity(bsz * heads);
        for b in 0..bsz {
            let n = batch.len_of(b);
            let r0 = b * len;
            for hd in 0..heads {
                let c0 = hd * dh;
                let qh = ops.slice_block(&q, r0, n, c0, dh)?;
                let kh = ops.slice_block(&k, r0, n, c0, dh)?;
                let vh = ops.slice_block(&v, r0, n, c0, dh)?;
                let out = match &config.attention_spec {
                    AttentionSpec::Nystrom {
                        landmarks,
                        pinv_iters,
                    } => attention::nystrom(ops, &qh, &kh, &vh, *landmarks, *pinv_iters, scale)?,
                    _ => {
                        let mask = cache.get(n, li)?;
                        ops.attention(&qh, &kh, &vh, &mask, scale)?
                    }
                };
                parts.push((out, r0, c0));
            }
        }
        drop((q, k, v));
        let refs: Vec<(&O::T, usize, usize)> = parts.iter().map(|(t, r, c)| (t, *r, *c)).collect();
        let attn = ops.assemble([rows, h], &refs)?;
        drop(refs);
        drop(parts);
        let o = dense(ops, &attn, &lw.o_weight, &lw.o_bias)?;
        drop(attn);
        let o = maybe_dropout(ops, o, config.dropout_p, mode)?;
        let x1 = ops.add(x, &o)?;
        drop(o);

        let f = ops.layer_norm(&x1, &lw.ln2_gamma, &lw.ln2_beta)?;
        let f = dense(ops, &f, &lw.ffn_in_weight, &lw.ffn_in_bias)?;
        let f = ops.gelu(&f);
        let f = dense(ops, &f, &lw.ffn_out_weight, &lw.ffn_out_bias)?;
        let f = maybe_dropout(ops, f, config.dropout_p, mode)?;
        let next = ops.add(&x1, &f)?;
        layers.push(next);
    }
    let last = layers.last().unwrap_or(&emb);
    let final_hidden = ops.layer_norm(last, &weights.final_ln_gamma, &weights.final_ln_beta)?;
    Ok(EncoderOutput {
        layers,
        final_hidden,
    })
}

/// `[rows × vocab]` logits: the tied embedding (or untied projection) plus
/// bias.
pub fn mlm_logits<O: Ops>(ops: &mut O, weights: &ModelWeights<O::T>, hidden: &O::T) -> Result<O::T> {
    let z = match &weights.mlm_weight {
        Some(w) => ops.matmul(hidden, w)?,
        None => ops.matmul_nt(hidden, &weights.token_embeddings)?,
    };
    ops.add_row(&z, &weights.mlm_bias)
}

/// `[rows × num_tags]` token-classification logits.
pub fn token_classification_logits<O: Ops>(
    ops: &mut O,
    weights: &ModelWeights<O::T>,
    hidden: &O::T,
) -> Result<O::T> {
    dense(ops, hidden, &weights.cls_weight, &weights.cls_bias)
}

fn to_3d(t: Tensor, batch: &TokenBatch) -> Result<Tensor> {
    let d = t.last_dim();
    t.reshape(&[batch.batch, batch.seq_len, d])
}

/// Eval-mode forward returning `[B×L×hidden]` states.
pub fn encode(config: &ModelConfig, weights: &ModelWeights<Tensor>, batch: &TokenBatch) -> Result<EncoderOutput<Tensor>> {
    let out = forward(&mut Eager::new(), config, weights, batch, Mode::Eval)?;
    Ok(EncoderOutput {
        layers: out
            .layers
            .into_iter()
            .map(|t| to_3d(t, batch))
            .collect::<Result<_>>()?,
        final_hidden: to_3d(out.final_hidden, batch)?,
    })
}

/// Eval-mode `[B×L×vocab]` MLM logits.
pub fn predict_mlm(config: &ModelConfig, weights: &ModelWeights<Tensor>, batch: &TokenBatch) -> Result<Tensor> {
    let mut ops = Eager::new();
    let out = forward(&mut ops, config, weights, batch, Mode::Eval)?;
    drop(out.layers);
    to_3d(mlm_logits(&mut ops, weights, &out.final_hidden)?, batch)
}

/// Eval-mode `[B×L×num_tags]` tag logits.
pub fn predict_tags(config: &ModelConfig, weights: &ModelWeights<Tensor>, batch: &TokenBatch) -> Result<Tensor> {
    let mut ops = Eager::new();
    let out = forward(&mut ops, config, weights, batch, Mode::Eval)?;
    drop(out.layers);
    to_3d(token_classification_logits(&mut ops, weights, &out.final_hidden)?, batch)
}
