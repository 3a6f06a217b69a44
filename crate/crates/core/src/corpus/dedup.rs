use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::CorpusRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dedup {
    None,
    /// Exact match after lowercasing and collapsing whitespace.
    ExactHash,
    /// Character `k`-shingle Jaccard similarity against retained records.
    Shingle { k: usize, jaccard_threshold: f64 },
}

/// Lowercased text with whitespace runs collapsed to one space.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Set of character `k`-grams of the normalised text. Texts shorter than
/// `k` yield themselves as the only shingle.
pub fn shingles(text: &str, k: usize) -> BTreeSet<String> {
    let chars: Vec<char> = normalize(text).chars().collect();
    let k = k.max(1);
    if chars.len() <= k {
        return core::iter::once(chars.iter().collect()).collect();
    }
    chars.windows(k).map(|w| w.iter().collect()).collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Drops later duplicates; the first occurrence is always kept and order is
/// preserved.
pub fn dedup_stream(records: Vec<CorpusRecord>, dedup: &Dedup) -> Vec<CorpusRecord> {
    match dedup {
        Dedup::None => records,
        Dedup::ExactHash => {
            let mut seen = BTreeSet::new();
            records
                .into_iter()
                .filter(|r| seen.insert(normalize(&r.text)))
                .collect()
        }
        Dedup::Shingle { k, jaccard_threshold } => {
            let mut kept_sets: Vec<BTreeSet<String>> = Vec::new();
            let mut out = Vec::new();
            for r in records {
                let s = shingles(&r.text, *k);
                if kept_sets.iter().all(|o| jaccard(&s, o) < *jaccard_threshold) {
                    kept_sets.push(s);
                    out.push(r);
                }
            }
            out
        }
    }
}
