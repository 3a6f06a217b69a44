use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::dedup::Dedup;

/// One raw text sample with its quality metadata.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppl: Option<f64>,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default)]
    pub categories: Vec<String>,
}

impl CorpusRecord {
    /// A record that passes the default policy.
    pub fn clean(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            lang: Some("en".into()),
            lang_prob: Some(0.99),
            ppl: Some(50.0),
            flags: Vec::new(),
            categories: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterPolicy {
    pub language: String,
    pub min_lang_prob: f64,
    /// Records with perplexity at or below this value are dropped.
    pub min_perplexity_exclusive: f64,
    pub banned_flags: Vec<String>,
    pub banned_categories: Vec<String>,
    pub dedup: Dedup,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            language: "en".into(),
            min_lang_prob: 0.80,
            min_perplexity_exclusive: 13.51,
            banned_flags: ["tiny", "short", "noisy"].iter().map(|s| String::from(*s)).collect(),
            banned_categories: Vec::new(),
            dedup: Dedup::ExactHash,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    MissingMetadata,
    Language,
    Quality,
    Perplexity,
    Category,
    Duplicate,
}

impl RejectReason {
    pub const ALL: [RejectReason; 6] = [
        RejectReason::MissingMetadata,
        RejectReason::Language,
        RejectReason::Quality,
        RejectReason::Perplexity,
        RejectReason::Category,
        RejectReason::Duplicate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::MissingMetadata => "missing_metadata",
            RejectReason::Language => "language",
            RejectReason::Quality => "quality",
            RejectReason::Perplexity => "perplexity",
            RejectReason::Category => "category",
            RejectReason::Duplicate => "duplicate",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Reject(RejectReason),
}

/// Applies the checks in fixed order: language, quality, perplexity,
/// category. Absent or out-of-range metadata rejects as missing.
pub fn filter_record(record: &CorpusRecord, policy: &FilterPolicy) -> Verdict {
    let (Some(lang), Some(prob), Some(ppl)) = (&record.lang, record.lang_prob, record.ppl) else {
        return Verdict::Reject(RejectReason::MissingMetadata);
    };
    if !(0.0..=1.0).contains(&prob) || !(ppl > 0.0) || !ppl.is_finite() {
        return Verdict::Reject(RejectReason::MissingMetadata);
    }
    if *lang != policy.language || prob < policy.min_lang_prob {
        return Verdict::Reject(RejectReason::Language);
    }
    if record.flags.iter().any(|f| policy.banned_flags.contains(f)) {
        return Verdict::Reject(RejectReason::Quality);
    }
    if ppl <= policy.min_perplexity_exclusive {
        return Verdict::Reject(RejectReason::Perplexity);
    }
    if record.categories.iter().any(|c| policy.banned_categories.contains(c)) {
        return Verdict::Reject(RejectReason::Category);
    }
    Verdict::Keep
}

/// Counts of kept records and of each rejection reason.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub kept: usize,
    pub rejected: BTreeMap<RejectReason, usize>,
}

impl FilterReport {
    pub fn count(&self, reason: RejectReason) -> usize {
        self.rejected.get(&reason).copied().unwrap_or(0)
    }

    /// `(reason, count)` rows, `kept` first, every reason listed.
    pub fn rows(&self) -> Vec<(&'static str, usize)> {
        let mut rows = alloc::vec![("kept", self.kept)];
        rows.extend(RejectReason::ALL.iter().map(|r| (r.as_str(), self.count(*r))));
        rows
    }
}

/// Filters then de-duplicates, preserving order.
pub fn filter_corpus(records: Vec<CorpusRecord>, policy: &FilterPolicy) -> (Vec<CorpusRecord>, FilterReport) {
    let mut report = FilterReport::default();
    let mut kept = Vec::new();
    for r in records {
        match filter_record(&r, policy) {
            Verdict::Keep => kept.push(r),
            Verdict::Reject(reason) => *report.rejected.entry(reason).or_default() += 1,
        }
    }
    let before = kept.len();
    let kept = super::dedup_stream(kept, &policy.dedup);
    let dups = before - kept.len();
    if dups > 0 {
        report.rejected.insert(RejectReason::Duplicate, dups);
    }
    report.kept = kept.len();
    (kept, report)
}
