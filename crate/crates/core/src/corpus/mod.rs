//! Corpus curation and training streams: quality filtering and
//! de-duplication, the toy tokenizer with packing and MLM masking, CoNLL
//! ingestion, and synthetic corpora.

mod conll;
mod dedup;
mod filter;
pub mod synth;
mod tokenize;

pub use conll::{parse_conll, write_conll, ConllData, TaggedSentence};
pub use dedup::{dedup_stream, jaccard, normalize, shingles, Dedup};
pub use filter::{filter_corpus, filter_record, CorpusRecord, FilterPolicy, FilterReport, RejectReason, Verdict};
pub use synth::{synth_mlm, synth_ner, MlmToyConfig, NerToyConfig};
pub use tokenize::{
    apply_mask, tokenize_pack, MaskPolicy, MaskedSequence, Vocab, MASK, NUM_SPECIAL, PAD, SEP, SPECIAL_TOKENS, UNK,
};

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{bail, Result};
use crate::rng::{self, streams};

impl FilterPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_lang_prob) {
            bail!(Parameter, "min_lang_prob {} outside [0, 1]", self.min_lang_prob);
        }
        if !self.min_perplexity_exclusive.is_finite() {
            bail!(Parameter, "perplexity threshold must be finite");
        }
        if let Dedup::Shingle { k, jaccard_threshold } = self.dedup {
            if k == 0 || !(jaccard_threshold > 0.0 && jaccard_threshold <= 1.0) {
                bail!(Parameter, "shingle dedup needs k ≥ 1 and threshold in (0, 1]");
            }
        }
        Ok(())
    }
}

/// Endless batches of `batch_size` items drawn epoch by epoch, each epoch a
/// fresh seeded shuffle of `items`.
pub struct EpochBatches<'a, T> {
    items: &'a [T],
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    rng: rng::Rng,
    epochs_left: Option<usize>,
}

impl<'a, T> EpochBatches<'a, T> {
    /// `epochs = None` cycles forever.
    pub fn new(items: &'a [T], batch_size: usize, seed: u64, epochs: Option<usize>) -> Result<Self> {
        if batch_size == 0 {
            bail!(Parameter, "batch_size must be at least 1");
        }
        Ok(Self {
            items,
            order: Vec::new(),
            cursor: 0,
            batch_size,
            rng: rng::stream(seed, streams::BATCHING),
            epochs_left: epochs,
        })
    }
}

impl<'a, T> Iterator for EpochBatches<'a, T> {
    type Item = Vec<&'a T>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.items.len() < self.batch_size {
            return None;
        }
        if self.cursor + self.batch_size > self.order.len() {
            match &mut self.epochs_left {
                Some(0) => return None,
                Some(n) => *n -= 1,
                None => {}
            }
            self.order = (0..self.items.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let batch = self.order[self.cursor..self.cursor + self.batch_size]
            .iter()
            .map(|&i| &self.items[i])
            .collect();
        self.cursor += self.batch_size;
        Some(batch)
    }
}

#[cfg(test)]
mod tests;
