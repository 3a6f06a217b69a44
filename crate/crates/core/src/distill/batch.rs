use alloc::vec::Vec;

use crate::corpus::{EpochBatches, MaskedSequence, TaggedSentence, Vocab, PAD};
use crate::encoder::TokenBatch;
use crate::error::{bail, Result};

/// Label of positions that carry no tag supervision.
pub const IGNORE_LABEL: u32 = u32::MAX;

/// Masked inputs with `(flat row, original token)` targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlmBatch {
    pub tokens: TokenBatch,
    pub targets: Vec<(usize, u32)>,
}

impl MlmBatch {
    pub fn from_sequences(seqs: &[&MaskedSequence]) -> Result<Self> {
        let ids: Vec<Vec<u32>> = seqs.iter().map(|s| s.ids.clone()).collect();
        let tokens = TokenBatch::padded(&ids, PAD)?;
        let mut targets = Vec::new();
        for (b, s) in seqs.iter().enumerate() {
            for &(pos, tok) in &s.targets {
                if pos >= s.ids.len() {
                    bail!(Input, "mask target {pos} beyond sequence of {}", s.ids.len());
                }
                targets.push((b * tokens.seq_len + pos, tok));
            }
        }
        Ok(Self { tokens, targets })
    }
}

/// Token ids with one tag label per flat row; padding rows hold
/// [`IGNORE_LABEL`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagBatch {
    pub tokens: TokenBatch,
    pub labels: Vec<u32>,
}

impl TagBatch {
    /// Encodes `sents` with `vocab`, truncating each to `max_len` tokens.
    pub fn from_sentences(sents: &[&TaggedSentence], vocab: &Vocab, max_len: usize) -> Result<Self> {
        if max_len == 0 {
            bail!(Parameter, "max_len must be at least 1");
        }
        let cut: Vec<TaggedSentence> = sents.iter().map(|s| s.truncated(max_len)).collect();
        let ids: Vec<Vec<u32>> = cut.iter().map(|s| vocab.encode_words(&s.tokens)).collect();
        let tokens = TokenBatch::padded(&ids, PAD)?;
        let mut labels = alloc::vec![IGNORE_LABEL; tokens.batch * tokens.seq_len];
        for (b, s) in cut.iter().enumerate() {
            for (i, t) in s.tags.iter().enumerate() {
                labels[b * tokens.seq_len + i] = t.id();
            }
        }
        Ok(Self { tokens, labels })
    }

    /// `(row, label)` pairs of supervised positions.
    pub fn targets(&self) -> Vec<(usize, u32)> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != IGNORE_LABEL)
            .map(|(r, &l)| (r, l))
            .collect()
    }
}

/// Seeded, epoch-shuffled MLM batches over `data`; `epochs = None` never
/// runs dry.
pub fn mlm_batches(
    data: &[MaskedSequence],
    batch_size: usize,
    seed: u64,
    epochs: Option<usize>,
) -> Result<impl Iterator<Item = Result<MlmBatch>> + '_> {
    Ok(EpochBatches::new(data, batch_size, seed, epochs)?.map(|b| MlmBatch::from_sequences(&b)))
}

/// Seeded, epoch-shuffled tagging batches over `data`.
pub fn tag_batches<'a>(
    data: &'a [TaggedSentence],
    vocab: &'a Vocab,
    max_len: usize,
    batch_size: usize,
    seed: u64,
    epochs: Option<usize>,
) -> Result<impl Iterator<Item = Result<TagBatch>> + 'a> {
    Ok(EpochBatches::new(data, batch_size, seed, epochs)?.map(move |b| TagBatch::from_sentences(&b, vocab, max_len)))
}
