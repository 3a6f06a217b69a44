use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::rng::{self, streams, Rng};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const SEP: u32 = 2;
pub const MASK: u32 = 3;
pub const NUM_SPECIAL: u32 = 4;
pub const SPECIAL_TOKENS: [&str; 4] = ["[PAD]", "[UNK]", "[SEP]", "[MASK]"];

/// Whitespace tokenizer over a closed vocabulary. Ids `0..4` are the
/// special tokens; unknown words map to `[UNK]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Vocab {
    /// Special tokens followed by `words` in the given order.
    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Result<Self> {
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(words.iter().map(|w| w.as_ref().to_string()));
        Self::from_tokens(tokens)
    }

    /// A full token list, specials included, as stored in checkpoints.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < NUM_SPECIAL as usize || tokens[..4] != SPECIAL_TOKENS {
            bail!(Input, "vocabulary must start with the special tokens");
        }
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                bail!(Input, "vocabulary entry {i} is empty or contains whitespace");
            }
            if index.insert(t.clone(), i as u32).is_some() {
                bail!(Input, "duplicate vocabulary entry `{t}`");
            }
        }
        Ok(Self { tokens, index })
    }

    /// The `max_words` most frequent words of `texts` (ties broken
    /// lexicographically) after the special tokens.
    pub fn build<S: AsRef<str>>(texts: &[S], max_words: usize) -> Self {
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for t in texts {
            for w in t.as_ref().split_whitespace() {
                if !SPECIAL_TOKENS.contains(&w) {
                    *freq.entry(w).or_default() += 1;
                }
            }
        }
        let mut words: Vec<(&str, usize)> = freq.into_iter().collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        words.truncate(max_words);
        let list: Vec<&str> = words.into_iter().map(|(w, _)| w).collect();
        Self::from_words(&list).expect("distinct non-special words")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.split_whitespace().map(|w| self.id(w)).collect()
    }

    pub fn encode_words<S: AsRef<str>>(&self, words: &[S]) -> Vec<u32> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }
}

/// Masked-LM corruption: each non-special token is selected with
/// probability `rate`; selected tokens become `[MASK]` with probability
/// `mask_frac`, a random word with probability `random_frac`, and are left
/// unchanged otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskPolicy {
    pub rate: f64,
    pub mask_frac: f64,
    pub random_frac: f64,
}

impl Default for MaskPolicy {
    fn default() -> Self {
        Self {
            rate: 0.15,
            mask_frac: 0.8,
            random_frac: 0.1,
        }
    }
}

impl MaskPolicy {
    pub fn none() -> Self {
        Self {
            rate: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if !ok(self.rate) || !ok(self.mask_frac) || !ok(self.random_frac) || self.mask_frac + self.random_frac > 1.0 {
            bail!(Parameter, "mask policy fractions out of range: {self:?}");
        }
        Ok(())
    }
}

/// A packed sequence and its `(position, original id)` MLM targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSequence {
    pub ids: Vec<u32>,
    pub targets: Vec<(usize, u32)>,
}

/// Corrupts `ids` in place and returns the MLM targets.
pub fn apply_mask(ids: &mut [u32], vocab_size: usize, policy: &MaskPolicy, rng: &mut Rng) -> Vec<(usize, u32)> {
    let mut targets = Vec::new();
    if policy.rate <= 0.0 {
        return targets;
    }
    for (pos, id) in ids.iter_mut().enumerate() {
        if *id < NUM_SPECIAL {
            continue;
        }
        if rng.random::<f64>() >= policy.rate {
            continue;
        }
        targets.push((pos, *id));
        let u = rng.random::<f64>();
        if u < policy.mask_frac {
            *id = MASK;
        } else if u < policy.mask_frac + policy.random_frac && vocab_size > NUM_SPECIAL as usize {
            *id = rng.random_range(NUM_SPECIAL..vocab_size as u32);
        }
    }
    targets
}

/// Encodes `texts`, joins them with `[SEP]`, cuts the stream into
/// `seq_len` chunks (dropping the remainder) and masks each chunk.
pub fn tokenize_pack<S: AsRef<str>>(
    texts: &[S],
    vocab: &Vocab,
    seq_len: usize,
    policy: &MaskPolicy,
    seed: u64,
) -> Result<Vec<MaskedSequence>> {
    if seq_len == 0 {
        bail!(Parameter, "seq_len must be positive");
    }
    policy.validate()?;
    let mut stream = Vec::new();
    for t in texts {
        let ids = vocab.encode(t.as_ref());
        if ids.is_empty() {
            continue;
        }
        stream.extend(ids);
        stream.push(SEP);
    }
    if stream.is_empty() {
        bail!(Input, "empty corpus: no tokens to pack");
    }
    let mut rng = rng::stream(seed, streams::MASKING);
    Ok(stream
        .chunks_exact(seq_len)
        .map(|chunk| {
            let mut ids = chunk.to_vec();
            let targets = apply_mask(&mut ids, vocab.len(), policy, &mut rng);
            MaskedSequence { ids, targets }
        })
        .collect())
}
