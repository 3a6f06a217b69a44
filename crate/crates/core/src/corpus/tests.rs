use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::Rng as _;

use super::*;
use crate::ner::{is_valid_bio, EntityType, Tag};
use crate::Error;

fn rec(prob: f64, ppl: f64) -> CorpusRecord {
    CorpusRecord {
        lang_prob: Some(prob),
        ppl: Some(ppl),
        ..CorpusRecord::clean("some text")
    }
}

#[test]
fn filter_boundaries() {
    let p = FilterPolicy::default();
    assert_eq!(filter_record(&rec(0.79, 50.0), &p), Verdict::Reject(RejectReason::Language));
    assert_eq!(filter_record(&rec(0.80, 50.0), &p), Verdict::Keep);
    assert_eq!(filter_record(&rec(0.9, 13.51), &p), Verdict::Reject(RejectReason::Perplexity));
    assert_eq!(filter_record(&rec(0.9, 13.52), &p), Verdict::Keep);
    let noisy = CorpusRecord {
        flags: vec!["noisy".into()],
        ..rec(0.9, 50.0)
    };
    assert_eq!(filter_record(&noisy, &p), Verdict::Reject(RejectReason::Quality));
}

#[test]
fn filter_reason_order_and_missing_metadata() {
    let p = FilterPolicy {
        banned_categories: vec!["spam".into()],
        ..FilterPolicy::default()
    };
    let everything_wrong = CorpusRecord {
        lang_prob: Some(0.1),
        ppl: Some(1.0),
        flags: vec!["tiny".into()],
        categories: vec!["spam".into()],
        ..CorpusRecord::clean("x")
    };
    assert_eq!(filter_record(&everything_wrong, &p), Verdict::Reject(RejectReason::Language));
    let q = CorpusRecord { lang_prob: Some(0.9), ..everything_wrong.clone() };
    assert_eq!(filter_record(&q, &p), Verdict::Reject(RejectReason::Quality));
    let r = CorpusRecord { flags: vec![], ..q };
    assert_eq!(filter_record(&r, &p), Verdict::Reject(RejectReason::Perplexity));
    let s = CorpusRecord { ppl: Some(20.0), ..r };
    assert_eq!(filter_record(&s, &p), Verdict::Reject(RejectReason::Category));
    let missing = CorpusRecord { ppl: None, ..s.clone() };
    assert_eq!(filter_record(&missing, &p), Verdict::Reject(RejectReason::MissingMetadata));
    let nolang = CorpusRecord { lang: None, ..s.clone() };
    assert_eq!(filter_record(&nolang, &p), Verdict::Reject(RejectReason::MissingMetadata));
    let german = CorpusRecord { lang: Some("de".into()), ..s };
    assert_eq!(filter_record(&german, &p), Verdict::Reject(RejectReason::Language));
}

fn arb_record() -> impl Strategy<Value = CorpusRecord> {
    (
        0.0f64..=1.0,
        prop::option::of(1.0f64..40.0),
        prop::sample::subsequence(vec!["tiny", "short", "noisy", "fine"], 0..=2),
        0u32..50,
    )
        .prop_map(|(prob, ppl, flags, text)| CorpusRecord {
            text: format!("text {text}"),
            lang: Some("en".into()),
            lang_prob: Some(prob),
            ppl,
            flags: flags.into_iter().map(String::from).collect(),
            categories: vec![],
        })
}

proptest! {
    #[test]
    fn kept_set_is_order_invariant(mut records in prop::collection::vec(arb_record(), 0..60), seed in any::<u64>()) {
        let p = FilterPolicy { dedup: Dedup::None, ..FilterPolicy::default() };
        let keep = |rs: &[CorpusRecord]| {
            let mut k: Vec<String> = rs.iter().filter(|r| filter_record(r, &p) == Verdict::Keep)
                .map(|r| format!("{r:?}")).collect();
            k.sort();
            k
        };
        let before = keep(&records);
        let mut r = crate::rng::stream(seed, 0);
        rand::seq::SliceRandom::shuffle(&mut records[..], &mut r);
        prop_assert_eq!(before, keep(&records));
    }

    #[test]
    fn raising_perplexity_threshold_never_grows_kept_set(
        records in prop::collection::vec(arb_record(), 0..60),
        lo in 1.0f64..30.0,
        bump in 0.0f64..10.0,
    ) {
        let a = FilterPolicy { min_perplexity_exclusive: lo, dedup: Dedup::None, ..FilterPolicy::default() };
        let b = FilterPolicy { min_perplexity_exclusive: lo + bump, ..a.clone() };
        for r in &records {
            if filter_record(r, &b) == Verdict::Keep {
                prop_assert_eq!(filter_record(r, &a), Verdict::Keep);
            }
        }
    }

    #[test]
    fn filtering_is_idempotent(records in prop::collection::vec(arb_record(), 0..60)) {
        let p = FilterPolicy::default();
        let (once, _) = filter_corpus(records, &p);
        let (twice, report) = filter_corpus(once.clone(), &p);
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(report.kept, once.len());
    }

    #[test]
    fn pack_targets_hold_original_ids(seed in any::<u64>(), seq_len in 1usize..20) {
        let texts: Vec<String> = (0..8).map(|i| (0..(i * 3 + 2)).map(|j| format!("w{}", (i * j) % 11)).collect::<Vec<_>>().join(" ")).collect();
        let vocab = Vocab::build(&texts, 8);
        let unmasked = tokenize_pack(&texts, &vocab, seq_len, &MaskPolicy::none(), 0).unwrap();
        let masked = tokenize_pack(&texts, &vocab, seq_len, &MaskPolicy { rate: 0.5, ..MaskPolicy::default() }, seed).unwrap();
        prop_assert_eq!(unmasked.len(), masked.len());
        for (u, m) in unmasked.iter().zip(&masked) {
            prop_assert!(m.ids.iter().all(|&t| (t as usize) < vocab.len()));
            for &(pos, orig) in &m.targets {
                prop_assert_eq!(u.ids[pos], orig);
            }
        }
    }
}

#[test]
fn exact_dedup_normalises() {
    let recs = vec![
        CorpusRecord::clean("Hello   World"),
        CorpusRecord::clean("hello world"),
        CorpusRecord::clean("hello world!"),
        CorpusRecord::clean("Hello World"),
    ];
    let out = dedup_stream(recs, &Dedup::ExactHash);
    let texts: Vec<&str> = out.iter().map(|r| r.text.as_str()).collect();
    assert_eq!(texts, vec!["Hello   World", "hello world!"]);
}

/// Independent Jaccard over sorted, de-duplicated character windows.
fn oracle_jaccard(a: &str, b: &str, k: usize) -> f64 {
    let grams = |s: &str| {
        let lower: String = s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
        let cs: Vec<char> = lower.chars().collect();
        let mut g: Vec<String> = if cs.len() <= k {
            vec![lower.clone()]
        } else {
            (0..=cs.len() - k).map(|i| cs[i..i + k].iter().collect()).collect()
        };
        g.sort();
        g.dedup();
        g
    };
    let (ga, gb) = (grams(a), grams(b));
    let inter = ga.iter().filter(|x| gb.contains(x)).count();
    inter as f64 / (ga.len() + gb.len() - inter) as f64
}

#[test]
fn shingle_dedup_drops_exactly_the_near_duplicate() {
    let mut r = crate::rng::stream(77, 0);
    let mut texts: Vec<String> = (0..9)
        .map(|_| (0..40).map(|_| (b'a' + r.random_range(0..26u8)) as char).collect())
        .collect();
    let base = texts[3].clone();
    let mut near = base[..36].to_string();
    near.push_str("zzzz");
    texts.push(near);
    let k = 5;
    // Oracle: which later records are ≥ 0.8 similar to an earlier kept one.
    let mut expect_kept: Vec<usize> = Vec::new();
    for i in 0..texts.len() {
        if expect_kept.iter().all(|&j| oracle_jaccard(&texts[i], &texts[j], k) < 0.8) {
            expect_kept.push(i);
        }
    }
    assert_eq!(expect_kept.len(), 9);
    assert!(oracle_jaccard(&base, &texts[9], k) >= 0.8);
    let recs: Vec<CorpusRecord> = texts.iter().map(|t| CorpusRecord::clean(t.clone())).collect();
    let out = dedup_stream(recs, &Dedup::Shingle { k, jaccard_threshold: 0.8 });
    let got: Vec<&str> = out.iter().map(|r| r.text.as_str()).collect();
    let want: Vec<&str> = expect_kept.iter().map(|&i| texts[i].as_str()).collect();
    assert_eq!(got, want);
    let again = dedup_stream(out.clone(), &Dedup::Shingle { k, jaccard_threshold: 0.8 });
    assert_eq!(again, out);
    assert!((jaccard(&shingles(&base, k), &shingles(&texts[9], k)) - oracle_jaccard(&base, &texts[9], k)).abs() < 1e-12);
}

#[test]
fn packing_reference_cases() {
    let text: String = (0..29).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
    let words: Vec<String> = (0..29).map(|i| format!("w{i}")).collect();
    let vocab = Vocab::from_words(&words).unwrap();
    // 29 words + one separator = 30 tokens.
    let chunks = tokenize_pack(&[text.clone()], &vocab, 8, &MaskPolicy::none(), 1).unwrap();
    assert_eq!(chunks.len(), 3);
    assert!(chunks.iter().all(|c| c.targets.is_empty() && c.ids.len() == 8));
    assert_eq!(chunks[0].ids[0], 4);
    let empty: [&str; 0] = [];
    assert!(matches!(tokenize_pack(&empty, &vocab, 8, &MaskPolicy::none(), 1), Err(Error::Input(_))));
    assert_eq!(vocab.encode("w0 nope"), vec![4, UNK]);
}

#[test]
fn masking_is_seeded() {
    let words: Vec<String> = (0..100).map(|i| format!("w{i}")).collect();
    let vocab = Vocab::from_words(&words).unwrap();
    let text: String = (0..511).map(|i| format!("w{}", i % 100)).collect::<Vec<_>>().join(" ");
    let p = MaskPolicy::default();
    let a = tokenize_pack(&[text.clone()], &vocab, 512, &p, 5).unwrap();
    let b = tokenize_pack(&[text.clone()], &vocab, 512, &p, 5).unwrap();
    assert_eq!(a, b);
    // Distinct seeds give distinct position sets in (far) more than 99% of trials.
    let mut same = 0;
    for s in 0..200u64 {
        let x = tokenize_pack(&[text.clone()], &vocab, 512, &p, 1000 + s).unwrap();
        let y = tokenize_pack(&[text.clone()], &vocab, 512, &p, 2000 + s).unwrap();
        let px: Vec<usize> = x[0].targets.iter().map(|t| t.0).collect();
        let py: Vec<usize> = y[0].targets.iter().map(|t| t.0).collect();
        same += usize::from(px == py);
    }
    assert_eq!(same, 0);
    // 15/80/10/10 split holds in aggregate.
    let mut counts = [0usize; 3];
    let mut total = 0usize;
    for s in 0..40u64 {
        let c = &tokenize_pack(&[text.clone()], &vocab, 512, &p, s).unwrap()[0];
        let orig = vocab.encode(&text);
        for &(pos, o) in &c.targets {
            assert_eq!(orig[pos], o);
            counts[if c.ids[pos] == MASK { 0 } else if c.ids[pos] == o { 2 } else { 1 }] += 1;
        }
        total += 511;
    }
    let selected: usize = counts.iter().sum();
    let rate = selected as f64 / total as f64;
    assert!((rate - 0.15).abs() < 0.01, "{rate}");
    assert!((counts[0] as f64 / selected as f64 - 0.8).abs() < 0.02);
}

#[test]
fn conll_reference_cases() {
    let data = parse_conll("EU B-ORG\nrejects O\nGerman B-MISC\ncall O\n\n").unwrap();
    assert_eq!(data.sentences.len(), 1);
    assert_eq!(data.sentences[0].tokens, vec!["EU", "rejects", "German", "call"]);
    assert_eq!(data.sentences[0].tags[0], Tag::B(EntityType::Org));
    assert_eq!(data.repairs, 0);

    let data = parse_conll("a O\nb I-PER\n").unwrap();
    assert_eq!(data.sentences[0].tags, vec![Tag::O, Tag::B(EntityType::Per)]);
    assert_eq!(data.repairs, 1);

    assert_eq!(parse_conll("").unwrap().sentences.len(), 0);
    assert_eq!(parse_conll("x O\n\nbad\n").unwrap_err(), Error::Parse { line: 3, msg: "missing tag column".into() });
    assert!(matches!(parse_conll("x B-FOO"), Err(Error::Parse { line: 1, .. })));

    let multi = parse_conll("-DOCSTART- -X- O\n\nEU NNP B-NP B-ORG\nx NN I-NP O\n\n\ny O\n").unwrap();
    assert_eq!(multi.sentences.len(), 2);
    assert_eq!(multi.sentences[0].tags, vec![Tag::B(EntityType::Org), Tag::O]);
}

#[test]
fn conll_round_trip_on_repaired_data() {
    let src = "a B-PER\nb I-PER\nc I-LOC\n\nd O\ne B-MISC\n";
    let data = parse_conll(src).unwrap();
    let again = parse_conll(&write_conll(&data.sentences)).unwrap();
    assert_eq!(again.sentences, data.sentences);
    assert_eq!(again.repairs, 0);
}

#[test]
fn synth_is_seeded_and_valid() {
    let a = synth_mlm(20, 3, &MlmToyConfig::default()).unwrap();
    assert_eq!(a, synth_mlm(20, 3, &MlmToyConfig::default()).unwrap());
    assert_ne!(a, synth_mlm(20, 4, &MlmToyConfig::default()).unwrap());
    let p = FilterPolicy::default();
    assert!(a.iter().all(|r| filter_record(r, &p) == Verdict::Keep));

    let cfg = NerToyConfig::default();
    let n = synth_ner(50, 9, &cfg).unwrap();
    assert_eq!(n, synth_ner(50, 9, &cfg).unwrap());
    for s in &n {
        assert!(is_valid_bio(&s.tags));
        assert_eq!(s.tokens.len(), s.tags.len());
    }
    let mut copy: Vec<Tag> = n.iter().flat_map(|s| s.tags.clone()).collect();
    assert_eq!(crate::ner::repair_bio(&mut copy), 0);
    assert!(synth_mlm(0, 1, &MlmToyConfig::default()).is_err());
}

#[test]
fn ner_lengths_hit_the_long_fraction() {
    let (_, sigma) = synth::length_model(330.0, 0.35).unwrap();
    // ln(512/330) / Φ⁻¹(0.65), evaluated independently.
    assert!((sigma - 1.139_913).abs() < 1e-5, "{sigma}");
    let mut r = crate::rng::stream(2024, crate::rng::streams::SYNTH);
    let lens = synth::sample_lengths(10_000, &NerToyConfig::default(), &mut r).unwrap();
    let frac = lens.iter().filter(|&&l| l > 512).count() as f64 / lens.len() as f64;
    assert!((frac - 0.35).abs() < 0.05, "{frac}");
    assert!(synth::length_model(600.0, 0.35).is_err());
}

#[test]
fn lexicons_are_disjoint() {
    let mut all: Vec<String> = synth::background_words();
    for e in EntityType::ALL {
        all.extend(synth::lexicon(e));
    }
    let n = all.len();
    all.sort();
    all.dedup();
    assert_eq!(all.len(), n);
}

#[test]
fn epoch_batches_cycle_deterministically() {
    let items: Vec<u32> = (0..10).collect();
    let a: Vec<Vec<u32>> = EpochBatches::new(&items, 3, 1, Some(2)).unwrap().map(|b| b.into_iter().copied().collect()).collect();
    assert_eq!(a.len(), 6);
    let b: Vec<Vec<u32>> = EpochBatches::new(&items, 3, 1, Some(2)).unwrap().map(|b| b.into_iter().copied().collect()).collect();
    assert_eq!(a, b);
    let mut first: Vec<u32> = a[..3].iter().flatten().copied().collect();
    first.sort();
    first.dedup();
    assert_eq!(first.len(), 9);
    assert_eq!(EpochBatches::new(&items, 3, 1, None).unwrap().take(100).count(), 100);
}
