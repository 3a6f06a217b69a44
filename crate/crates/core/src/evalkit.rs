//! Entity-level NER scoring, corpus statistics and the ratio arithmetic
//! behind retention and speed-up figures.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::corpus::TaggedSentence;
use crate::error::{bail, Result};
use crate::ner::{EntityType, Tag, NUM_TAGS};
use crate::numcore::Tensor;

/// Half-open token span `[start, end)` with its entity type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NerSpan {
    pub start: usize,
    pub end: usize,
    pub tag: EntityType,
}

/// Maximal spans of a tag sequence. `I-X` that does not continue an `X`
/// span opens a new one.
pub fn decode_tags(tags: &[Tag]) -> Vec<NerSpan> {
    let mut spans = Vec::new();
    let mut open: Option<NerSpan> = None;
    for (i, &t) in tags.iter().enumerate() {
        match t {
            Tag::O => {
                spans.extend(open.take());
            }
            Tag::B(e) => {
                spans.extend(open.take());
                open = Some(NerSpan { start: i, end: i + 1, tag: e });
            }
            Tag::I(e) => match &mut open {
                Some(s) if s.tag == e => s.end = i + 1,
                _ => {
                    spans.extend(open.take());
                    open = Some(NerSpan { start: i, end: i + 1, tag: e });
                }
            },
        }
    }
    spans.extend(open);
    spans
}

/// [`decode_tags`] over label strings.
pub fn decode_bio<S: AsRef<str>>(labels: &[S]) -> Result<Vec<NerSpan>> {
    let tags = labels.iter().map(|l| l.as_ref().parse()).collect::<Result<Vec<Tag>>>()?;
    Ok(decode_tags(&tags))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold spans.
    pub support: usize,
}

impl Prf {
    /// Zero whenever a denominator vanishes.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            support: tp + fn_,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NerScores {
    pub per_tag: BTreeMap<EntityType, Prf>,
    pub micro: Prf,
}

impl NerScores {
    /// `(tag, precision, recall, f1, support)` rows, per type then `micro`.
    pub fn rows(&self) -> Vec<(&'static str, Prf)> {
        let mut rows: Vec<(&'static str, Prf)> = EntityType::ALL
            .iter()
            .map(|e| (e.as_str(), self.per_tag.get(e).copied().unwrap_or_default()))
            .collect();
        rows.push(("micro", self.micro));
        rows
    }
}

/// Exact-match span scoring: a prediction counts only if start, end and
/// type all agree with a gold span. Micro-averaged over all types.
pub fn entity_f1(pred: &[Vec<Tag>], gold: &[Vec<Tag>]) -> Result<NerScores> {
    if pred.len() != gold.len() {
        bail!(Input, "{} predicted vs {} gold sequences", pred.len(), gold.len());
    }
    let mut counts: BTreeMap<EntityType, (usize, usize, usize)> = BTreeMap::new();
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            bail!(Input, "sequence {i}: {} predicted vs {} gold tags", p.len(), g.len());
        }
        let ps = decode_tags(p);
        let gs = decode_tags(g);
        for s in &ps {
            let c = counts.entry(s.tag).or_default();
            if gs.contains(s) {
                c.0 += 1;
            } else {
                c.1 += 1;
            }
        }
        for s in &gs {
            if !ps.contains(s) {
                counts.entry(s.tag).or_default().2 += 1;
            }
        }
    }
    let mut scores = NerScores::default();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for e in EntityType::ALL {
        let (a, b, c) = counts.get(&e).copied().unwrap_or_default();
        scores.per_tag.insert(e, Prf::from_counts(a, b, c));
        tp += a;
        fp += b;
        fn_ += c;
    }
    scores.micro = Prf::from_counts(tp, fp, fn_);
    Ok(scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StdMode {
    #[default]
    Population,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthStats {
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub max: f64,
}

/// Row labels of the length-statistics report.
pub const STATS_ROWS: [&str; 7] = ["mean", "std. dev.", "min", "25%", "50%", "75%", "max"];

impl LengthStats {
    pub fn values(&self) -> [f64; 7] {
        [self.mean, self.std_dev, self.min, self.p25, self.p50, self.p75, self.max]
    }

    /// Two-column `statistic,value` report with one decimal.
    pub fn report(&self) -> String {
        let mut out = String::from("statistic,value\n");
        for (name, v) in STATS_ROWS.iter().zip(self.values()) {
            let _ = writeln!(out, "{name},{v:.1}");
        }
        out
    }
}

/// Percentile `q ∈ [0, 1]` of sorted data, interpolating linearly between
/// the closest ranks (`rank = q·(n−1)`).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q * (n - 1) as f64;
    let lo = libm::floor(rank) as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn length_stats(lengths: &[usize], mode: StdMode) -> Result<LengthStats> {
    if lengths.is_empty() {
        bail!(Input, "length statistics of an empty list");
    }
    let mut v: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    let denom = match mode {
        StdMode::Population => n,
        StdMode::Sample if v.len() > 1 => n - 1.0,
        StdMode::Sample => n,
    };
    Ok(LengthStats {
        mean,
        std_dev: libm::sqrt(ss / denom),
        min: v[0],
        p25: percentile(&v, 0.25),
        p50: percentile(&v, 0.50),
        p75: percentile(&v, 0.75),
        max: v[v.len() - 1],
    })
}

/// Per-label counts with proportions over all tokens (`p`) and over non-`O`
/// tokens (`p1`).
#[derive(Debug, Clone, PartialEq)]
pub struct TagDistribution {
    pub counts: [usize; NUM_TAGS],
    pub p: [f64; NUM_TAGS],
    pub p1: [f64; NUM_TAGS],
    /// Set when there are no entity tokens, so `p1` is all zeros.
    pub p1_undefined: bool,
}

pub fn tag_distribution(sentences: &[TaggedSentence]) -> TagDistribution {
    let mut counts = [0usize; NUM_TAGS];
    for s in sentences {
        for t in &s.tags {
            counts[t.id() as usize] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let non_o = total - counts[0];
    let mut p = [0.0; NUM_TAGS];
    let mut p1 = [0.0; NUM_TAGS];
    for i in 0..NUM_TAGS {
        if total > 0 {
            p[i] = counts[i] as f64 / total as f64;
        }
        if i > 0 && non_o > 0 {
            p1[i] = counts[i] as f64 / non_o as f64;
        }
    }
    TagDistribution {
        counts,
        p,
        p1,
        p1_undefined: non_o == 0,
    }
}

impl TagDistribution {
    /// `tag,count,p,p1` CSV with a closing `Total` row.
    pub fn report(&self) -> String {
        let mut out = String::from("tag,count,p,p1\n");
        for (i, t) in Tag::all().iter().enumerate() {
            let p1 = if i == 0 { String::from("-") } else { alloc::format!("{:.4}", self.p1[i]) };
            let _ = writeln!(out, "{t},{},{:.4},{p1}", self.counts[i], self.p[i]);
        }
        let total: usize = self.counts.iter().sum();
        let _ = writeln!(
            out,
            "Total,{total},{:.4},{:.4}",
            self.p.iter().sum::<f64>(),
            self.p1.iter().sum::<f64>()
        );
        out
    }
}

/// Count of `(row, token)` targets whose logit row peaks at `token`
/// (first maximum wins), with the number of targets.
pub fn argmax_hits(logits: &Tensor, targets: &[(usize, u32)]) -> Result<(usize, usize)> {
    let (rows, v) = logits.dims2()?;
    let mut hits = 0;
    for &(row, tok) in targets {
        if row >= rows {
            bail!(Input, "target row {row} outside {rows} rows");
        }
        let z = &logits.data()[row * v..(row + 1) * v];
        let best = z
            .iter()
            .enumerate()
            .fold(0, |best, (i, &x)| if x > z[best] { i } else { best });
        hits += usize::from(best == tok as usize);
    }
    Ok((hits, targets.len()))
}

/// `student / teacher`.
pub fn retention(student: f64, teacher: f64) -> Result<f64> {
    if !(teacher > 0.0) {
        bail!(Input, "teacher metric must be positive, got {teacher}");
    }
    Ok(student / teacher)
}

/// Signed relative change `(new − old) / old`.
pub fn speedup(new_time: f64, old_time: f64) -> Result<f64> {
    if !(old_time > 0.0) {
        bail!(Input, "reference time must be positive, got {old_time}");
    }
    Ok((new_time - old_time) / old_time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    use EntityType::*;

    fn span(start: usize, end: usize, tag: EntityType) -> NerSpan {
        NerSpan { start, end, tag }
    }

    #[test]
    fn decode_reference_cases() {
        assert_eq!(decode_bio(&["B-PER", "I-PER", "O"]).unwrap(), vec![span(0, 2, Per)]);
        assert_eq!(decode_bio(&["O", "I-LOC"]).unwrap(), vec![span(1, 2, Loc)]);
        assert_eq!(decode_bio(&["B-ORG", "B-ORG"]).unwrap(), vec![span(0, 1, Org), span(1, 2, Org)]);
        assert_eq!(decode_bio(&["B-PER", "I-ORG"]).unwrap(), vec![span(0, 1, Per), span(1, 2, Org)]);
        assert!(decode_bio(&["B-XYZ"]).is_err());
    }

    fn tags_for(spans: &[NerSpan], n: usize) -> Vec<Tag> {
        let mut t = vec![Tag::O; n];
        for s in spans {
            t[s.start] = Tag::B(s.tag);
            for x in t.iter_mut().take(s.end).skip(s.start + 1) {
                *x = Tag::I(s.tag);
            }
        }
        t
    }

    #[test]
    fn f1_reference_cases() {
        let gold = tags_for(&[span(0, 2, Per), span(3, 4, Org)], 6);
        let pred = tags_for(&[span(0, 2, Per), span(3, 5, Org)], 6);
        let s = entity_f1(&[pred], &[gold.clone()]).unwrap();
        assert_eq!(s.per_tag[&Per].f1, 1.0);
        assert_eq!(s.per_tag[&Org].f1, 0.0);
        assert!((s.micro.f1 - 0.5).abs() < 1e-12);

        let same = entity_f1(&[gold.clone()], &[gold.clone()]).unwrap();
        assert_eq!(same.micro.f1, 1.0);
        assert_eq!(same.per_tag[&Per].f1, 1.0);

        let none = entity_f1(&[vec![Tag::O; 6]], &[gold.clone()]).unwrap();
        assert_eq!((none.micro.precision, none.micro.recall, none.micro.f1), (0.0, 0.0, 0.0));

        assert!(entity_f1(&[vec![Tag::O; 5]], &[gold]).is_err());
    }

    /// Brute-force oracle: enumerate every candidate `(start, end, type)`
    /// and test membership against each side's span set.
    fn oracle_micro_f1(pred: &[Vec<Tag>], gold: &[Vec<Tag>]) -> f64 {
        let spans_of = |tags: &[Tag]| -> BTreeSet<(usize, usize, EntityType)> {
            let mut out = BTreeSet::new();
            let n = tags.len();
            for s in 0..n {
                for e in s + 1..=n {
                    for ty in EntityType::ALL {
                        let opens = match tags[s] {
                            Tag::B(t) => t == ty,
                            Tag::I(t) => t == ty && (s == 0 || tags[s - 1].entity() != Some(ty)),
                            Tag::O => false,
                        };
                        let inner = (s + 1..e).all(|i| tags[i] == Tag::I(ty));
                        let closes = e == n || tags[e] != Tag::I(ty);
                        if opens && inner && closes {
                            out.insert((s, e, ty));
                        }
                    }
                }
            }
            out
        };
        let (mut tp, mut np, mut ng) = (0usize, 0usize, 0usize);
        for (p, g) in pred.iter().zip(gold) {
            let ps = spans_of(p);
            let gs = spans_of(g);
            tp += ps.intersection(&gs).count();
            np += ps.len();
            ng += gs.len();
        }
        if tp == 0 {
            return 0.0;
        }
        let (pr, rc) = (tp as f64 / np as f64, tp as f64 / ng as f64);
        2.0 * pr * rc / (pr + rc)
    }

    fn arb_tags(n: usize) -> impl Strategy<Value = Vec<Tag>> {
        prop::collection::vec(0u32..9, n).prop_map(|ids| ids.into_iter().map(|i| Tag::from_id(i).unwrap()).collect())
    }

    fn arb_pair() -> impl Strategy<Value = (Vec<Tag>, Vec<Tag>)> {
        (1usize..12).prop_flat_map(|n| (arb_tags(n), arb_tags(n)))
    }

    proptest! {
        #[test]
        fn f1_matches_oracle(pairs in prop::collection::vec(arb_pair(), 1..6)) {
            let (p, g): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let got = entity_f1(&p, &g).unwrap().micro.f1;
            prop_assert!((got - oracle_micro_f1(&p, &g)).abs() < 1e-12);
        }

        #[test]
        fn swapping_sides_swaps_precision_and_recall(pairs in prop::collection::vec(arb_pair(), 1..6)) {
            let (p, g): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let a = entity_f1(&p, &g).unwrap().micro;
            let b = entity_f1(&g, &p).unwrap().micro;
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
            prop_assert!((a.precision - b.recall).abs() < 1e-12);
            prop_assert!((a.recall - b.precision).abs() < 1e-12);
        }

        #[test]
        fn decoded_spans_are_sorted_and_disjoint(tags in (1usize..30).prop_flat_map(arb_tags)) {
            let spans = decode_tags(&tags);
            for w in spans.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            for s in &spans {
                prop_assert!(s.start < s.end);
            }
        }

        #[test]
        fn distribution_columns_sum_to_one(sents in prop::collection::vec((1usize..20).prop_flat_map(arb_tags), 1..10)) {
            let data: Vec<TaggedSentence> = sents.into_iter().map(|tags| TaggedSentence {
                tokens: tags.iter().map(|_| "x".to_string()).collect(),
                tags,
            }).collect();
            let d = tag_distribution(&data);
            prop_assert!((d.p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            if !d.p1_undefined {
                prop_assert!((d.p1.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn percentiles_are_ordered(lens in prop::collection::vec(1usize..5000, 1..200)) {
            let s = length_stats(&lens, StdMode::Population).unwrap();
            prop_assert!(s.min <= s.p25 && s.p25 <= s.p50 && s.p50 <= s.p75 && s.p75 <= s.max);
        }
    }

    #[test]
    fn stats_reference_cases() {
        let s = length_stats(&[1, 1, 1], StdMode::Population).unwrap();
        assert_eq!(s.values(), [1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let s = length_stats(&[1, 2, 3, 4, 5], StdMode::Population).unwrap();
        assert_eq!((s.p50, s.mean, s.min, s.max), (3.0, 3.0, 1.0, 5.0));
        assert_eq!((s.p25, s.p75), (2.0, 4.0));
        assert!((s.std_dev - libm::sqrt(2.0)).abs() < 1e-12);
        let ss = length_stats(&[1, 2, 3, 4, 5], StdMode::Sample).unwrap();
        assert!((ss.std_dev - libm::sqrt(2.5)).abs() < 1e-12);
        // numpy.percentile([1, 2, 10, 20], 25) == 1.75
        assert!((length_stats(&[20, 1, 10, 2], StdMode::Population).unwrap().p25 - 1.75).abs() < 1e-12);
        assert!(length_stats(&[], StdMode::Population).is_err());
        let report = s.report();
        let names: Vec<&str> = report.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(names, STATS_ROWS);
    }

    #[test]
    fn distribution_reference_cases() {
        let one = TaggedSentence::new(vec!["a".into(), "b".into()], vec![Tag::B(Per), Tag::O]).unwrap();
        let d = tag_distribution(&[one]);
        assert_eq!(d.p[Tag::B(Per).id() as usize], 0.5);
        assert_eq!(d.p1[Tag::B(Per).id() as usize], 1.0);

        let all_o = TaggedSentence::new(vec!["a".into()], vec![Tag::O]).unwrap();
        let d = tag_distribution(&[all_o]);
        assert_eq!(d.p[0], 1.0);
        assert!(d.p1_undefined);
        assert!(d.p1.iter().all(|&v| v == 0.0));

        // 10 B-PER tokens planted among 100.
        let mut tags = vec![Tag::O; 100];
        for i in 0..10 {
            tags[i * 10] = Tag::B(Per);
        }
        let planted = TaggedSentence::new(vec!["x".into(); 100], tags).unwrap();
        let d = tag_distribution(&[planted]);
        assert_eq!(d.counts[1], 10);
        assert_eq!(d.p[1], 0.10);
        assert!(d.report().ends_with("Total,100,1.0000,1.0000\n"));
    }

    #[test]
    fn ratio_reference_cases() {
        let pct = |x: f64| x * 100.0;
        assert!((pct(retention(85.81, 92.24).unwrap()) - 93.0).abs() < 0.15);
        assert!((pct(retention(64.96, 73.48).unwrap()) - 88.4).abs() < 0.15);
        assert!((pct(retention(67.7, 70.6).unwrap()) - 95.9).abs() < 0.15);
        assert!((pct(retention(93.6, 93.8).unwrap()) - 99.8).abs() < 0.15);
        assert!((pct(speedup(0.787, 1.866).unwrap()) + 57.8).abs() < 0.15);
        assert!((pct(speedup(0.075, 0.148).unwrap()) + 49.3).abs() < 0.15);
        assert_eq!(retention(3.5, 3.5).unwrap(), 1.0);
        assert_eq!(speedup(2.0, 2.0).unwrap(), 0.0);
        assert!(retention(1.0, 0.0).is_err());
        assert!(speedup(1.0, -1.0).is_err());
    }
}
