//! Seeded synthetic corpora for desk-scale runs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::{CorpusRecord, TaggedSentence};
use crate::error::{bail, Result};
use crate::ner::{EntityType, Tag};
use crate::rng::{self, streams, Rng};

/// Fixed seed of the toy language itself, so corpora drawn with different
/// sample seeds share one grammar.
const GRAMMAR_SEED: u64 = 0x5EED_0F_7A11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlmToyConfig {
    pub vocab_words: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Chance that a position repeats the token `Δ` places earlier.
    pub copy_prob: f64,
}

impl Default for MlmToyConfig {
    fn default() -> Self {
        Self {
            vocab_words: 48,
            min_len: 24,
            max_len: 64,
            copy_prob: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NerToyConfig {
    pub median_len: f64,
    /// Target share of sentences longer than 512 tokens.
    pub over_512_fraction: f64,
    pub max_len: usize,
    /// Chance of starting an entity at a free position.
    pub entity_rate: f64,
}

impl Default for NerToyConfig {
    fn default() -> Self {
        Self {
            median_len: 330.0,
            over_512_fraction: 0.35,
            max_len: 16_384,
            entity_rate: 0.15,
        }
    }
}

/// Word `i` of the toy MLM language.
pub fn mlm_word(i: usize) -> String {
    format!("t{i}")
}

struct Grammar {
    successors: Vec<[usize; 3]>,
}

const SUCCESSOR_CDF: [f64; 3] = [0.7, 0.9, 1.0];

impl Grammar {
    fn new(vocab: usize) -> Self {
        let mut r = rng::stream(GRAMMAR_SEED, streams::SYNTH);
        let successors = (0..vocab)
            .map(|_| {
                [
                    r.random_range(0..vocab),
                    r.random_range(0..vocab),
                    r.random_range(0..vocab),
                ]
            })
            .collect();
        Self { successors }
    }

    fn next(&self, prev: usize, r: &mut Rng) -> usize {
        let u = r.random::<f64>();
        let slot = SUCCESSOR_CDF.iter().position(|&c| u < c).unwrap_or(2);
        self.successors[prev][slot]
    }
}

/// Markov-chain sequences with long-range copies: for a per-sequence
/// offset `Δ ≤ len/2`, position `i` repeats position `i−Δ` with
/// probability `copy_prob`.
pub fn synth_mlm(size: usize, seed: u64, cfg: &MlmToyConfig) -> Result<Vec<CorpusRecord>> {
    if size == 0 {
        bail!(Parameter, "corpus size must be at least 1");
    }
    if cfg.vocab_words == 0 || cfg.min_len < 2 || cfg.max_len < cfg.min_len {
        bail!(Parameter, "invalid toy MLM config {cfg:?}");
    }
    let grammar = Grammar::new(cfg.vocab_words);
    let mut r = rng::stream(seed, streams::SYNTH);
    let mut out = Vec::with_capacity(size);
    for _ in 0..size {
        let len = r.random_range(cfg.min_len..=cfg.max_len);
        let delta = r.random_range(1..=len / 2);
        let mut toks: Vec<usize> = Vec::with_capacity(len);
        toks.push(r.random_range(0..cfg.vocab_words));
        for i in 1..len {
            let t = if i >= delta && r.random::<f64>() < cfg.copy_prob {
                toks[i - delta]
            } else {
                grammar.next(toks[i - 1], &mut r)
            };
            toks.push(t);
        }
        let words: Vec<String> = toks.into_iter().map(mlm_word).collect();
        out.push(CorpusRecord::clean(words.join(" ")));
    }
    Ok(out)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF by bisection.
pub fn normal_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Log-normal `(μ, σ)` with median `median` and `P(X > 512) = fraction`.
pub fn length_model(median: f64, fraction: f64) -> Result<(f64, f64)> {
    if !(median > 0.0) || !(fraction > 0.0 && fraction < 1.0) {
        bail!(Parameter, "median {median} / fraction {fraction} out of range");
    }
    let mu = libm::log(median);
    let sigma = (libm::log(512.0) - mu) / normal_quantile(1.0 - fraction);
    if !(sigma > 0.0) || !sigma.is_finite() {
        bail!(
            Parameter,
            "no log-normal with median {median} puts {fraction} of its mass above 512"
        );
    }
    Ok((mu, sigma))
}

/// Sentence lengths drawn from the configured log-normal, clamped to
/// `[1, max_len]`.
pub fn sample_lengths(count: usize, cfg: &NerToyConfig, r: &mut Rng) -> Result<Vec<usize>> {
    let (mu, sigma) = length_model(cfg.median_len, cfg.over_512_fraction)?;
    let dist = LogNormal::new(mu, sigma).map_err(|e| crate::Error::Parameter(format!("{e}")))?;
    Ok((0..count)
        .map(|_| {
            let x: f64 = dist.sample(r);
            (libm::round(x) as usize).clamp(1, cfg.max_len.max(1))
        })
        .collect())
}

const SYLLABLES: [&str; 12] = ["ka", "lo", "mi", "ra", "te", "su", "vi", "no", "de", "ba", "zu", "fe"];
const LEXICON_SIZE: usize = 36;

fn lexicon_word(i: usize, suffix: &str, capital: bool) -> String {
    let a = SYLLABLES[i % SYLLABLES.len()];
    let b = SYLLABLES[(i / SYLLABLES.len() + 5 * i) % SYLLABLES.len()];
    let mut w = format!("{a}{b}{suffix}");
    if capital {
        w[..1].make_ascii_uppercase();
    }
    w
}

/// Surface forms that always carry entity type `e`.
pub fn lexicon(e: EntityType) -> Vec<String> {
    let suffix = match e {
        EntityType::Per => "son",
        EntityType::Org => "corp",
        EntityType::Loc => "ville",
        EntityType::Misc => "ian",
    };
    (0..LEXICON_SIZE).map(|i| lexicon_word(i, suffix, true)).collect()
}

/// Background words, always tagged `O`.
pub fn background_words() -> Vec<String> {
    (0..2 * LEXICON_SIZE).map(|i| lexicon_word(i, &format!("{}", i / SYLLABLES.len()), false)).collect()
}

const ENTITY_WEIGHTS: [(EntityType, f64, usize); 4] = [
    (EntityType::Per, 0.30, 2),
    (EntityType::Org, 0.25, 3),
    (EntityType::Loc, 0.25, 2),
    (EntityType::Misc, 0.20, 3),
];

/// Sentences whose tags are a function of lexicon membership, with
/// log-normal lengths.
pub fn synth_ner(size: usize, seed: u64, cfg: &NerToyConfig) -> Result<Vec<TaggedSentence>> {
    if size == 0 {
        bail!(Parameter, "corpus size must be at least 1");
    }
    if !(0.0..=1.0).contains(&cfg.entity_rate) {
        bail!(Parameter, "entity_rate {} outside [0, 1]", cfg.entity_rate);
    }
    let mut r = rng::stream(seed, streams::SYNTH);
    let lengths = sample_lengths(size, cfg, &mut r)?;
    let lexicons: Vec<Vec<String>> = EntityType::ALL.iter().map(|e| lexicon(*e)).collect();
    let background = background_words();
    let mut out = Vec::with_capacity(size);
    for len in lengths {
        let mut tokens = Vec::with_capacity(len);
        let mut tags = Vec::with_capacity(len);
        while tokens.len() < len {
            if r.random::<f64>() < cfg.entity_rate {
                let u = r.random::<f64>();
                let mut acc = 0.0;
                let mut pick = ENTITY_WEIGHTS[3];
                for w in ENTITY_WEIGHTS {
                    acc += w.1;
                    if u < acc {
                        pick = w;
                        break;
                    }
                }
                let (etype, _, max_span) = pick;
                let lex = &lexicons[EntityType::ALL.iter().position(|e| *e == etype).expect("listed")];
                let span = r.random_range(1..=max_span).min(len - tokens.len());
                for k in 0..span {
                    tokens.push(lex[r.random_range(0..lex.len())].clone());
                    tags.push(if k == 0 { Tag::B(etype) } else { Tag::I(etype) });
                }
            } else {
                tokens.push(background[r.random_range(0..background.len())].clone());
                tags.push(Tag::O);
            }
        }
        out.push(TaggedSentence { tokens, tags });
    }
    Ok(out)
}
