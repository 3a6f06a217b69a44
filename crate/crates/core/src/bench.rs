//! Inference cost measurement: wall time, tensor high-water mark and
//! attended-pair counts per sequence length, plus growth-ratio reports.
//!
//! The clock is injected so the harness itself stays platform-free.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::attention::attended_pairs;
use crate::encoder::{self, count_all_params, Mode, ModelCheckpoint, TokenBatch};
use crate::error::{bail, Error, Result};
use crate::numcore::{alloc_stats, reset_peak, Eager};
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub seq_lens: Vec<usize>,
    pub batch_size: usize,
    pub warmup_reps: usize,
    pub timed_reps: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seq_lens: alloc::vec![128, 256, 512, 1024],
            batch_size: 16,
            warmup_reps: 2,
            timed_reps: 5,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.timed_reps < 3 {
            bail!(Parameter, "timed_reps must be at least 3, got {}", self.timed_reps);
        }
        if self.seq_lens.is_empty() || self.seq_lens.contains(&0) {
            bail!(Parameter, "seq_lens must be non-empty and positive");
        }
        if self.seq_lens.windows(2).any(|w| w[0] >= w[1]) {
            bail!(Parameter, "seq_lens must be strictly ascending, got {:?}", self.seq_lens);
        }
        if self.batch_size == 0 {
            bail!(Parameter, "batch_size must be at least 1");
        }
        Ok(())
    }
}

/// Measurements of one model at one sequence length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub model: String,
    pub label: String,
    pub seq_len: usize,
    pub batch: usize,
    pub mean_s: f64,
    pub std_s: f64,
    pub peak_bytes: usize,
    /// Query-key pairs of one head over one sequence.
    pub attended_pairs: usize,
    pub params: usize,
    /// Raw timed samples in seconds.
    pub samples: Vec<f64>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, libm::sqrt(var))
}

/// Times eval-mode forwards of `ckpt` on seeded random token batches.
///
/// `clock` returns monotonic seconds. The peak is the tensor high-water mark
/// over the timed forwards, above the bytes already live when the window
/// opens (the weights), so it measures what the forward itself allocates.
pub fn time_inference_with(
    ckpt: &ModelCheckpoint,
    cfg: &BenchConfig,
    model: &str,
    label: &str,
    clock: &mut dyn FnMut() -> f64,
) -> Result<Vec<BenchResult>> {
    cfg.validate()?;
    ckpt.validate()?;
    let max = ckpt.config.max_positions;
    if let Some(&bad) = cfg.seq_lens.iter().find(|&&l| l > max) {
        return Err(Error::Length { len: bad, max });
    }
    let mut r = rng::stream(cfg.seed, streams::BENCH);
    let vocab = ckpt.config.vocab_size as u32;
    let params = count_all_params(&ckpt.config);
    let mut out = Vec::with_capacity(cfg.seq_lens.len());
    for &n in &cfg.seq_lens {
        let ids: Vec<u32> = (0..cfg.batch_size * n).map(|_| r.random_range(0..vocab)).collect();
        let batch = TokenBatch::new(ids, cfg.batch_size, n)?;
        let run = || -> Result<()> {
            let out = encoder::forward(&mut Eager::new(), &ckpt.config, &ckpt.weights, &batch, Mode::Eval)?;
            drop(out);
            Ok(())
        };
        for _ in 0..cfg.warmup_reps {
            run()?;
        }
        reset_peak();
        let base = alloc_stats().current_bytes;
        let mut samples = Vec::with_capacity(cfg.timed_reps);
        for _ in 0..cfg.timed_reps {
            let t0 = clock();
            run()?;
            samples.push(clock() - t0);
        }
        let peak_bytes = alloc_stats().peak_bytes - base;
        let (mean_s, std_s) = mean_std(&samples);
        out.push(BenchResult {
            model: model.into(),
            label: label.into(),
            seq_len: n,
            batch: cfg.batch_size,
            mean_s,
            std_s,
            peak_bytes,
            attended_pairs: attended_pairs(&ckpt.config.attention_spec, n)?,
            params,
            samples,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    /// Pair ratio below 2.5 per doubling.
    NearLinear,
    /// Pair ratio above 3.5 per doubling.
    NearQuadratic,
    Intermediate,
}

impl Growth {
    pub fn classify(pair_ratio: f64) -> Self {
        if pair_ratio < 2.5 {
            Self::NearLinear
        } else if pair_ratio > 3.5 {
            Self::NearQuadratic
        } else {
            Self::Intermediate
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::NearLinear => "near_linear",
            Self::NearQuadratic => "near_quadratic",
            Self::Intermediate => "intermediate",
        }
    }
}

/// Growth between two consecutive lengths of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub model: String,
    pub label: String,
    pub from_len: usize,
    pub to_len: usize,
    pub time_ratio: f64,
    pub mem_ratio: f64,
    pub pair_ratio: f64,
    pub growth: Growth,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub warnings: Vec<String>,
}

/// Ratios across every length doubling of each `(model, label)` group.
/// Gaps and single-length groups produce warnings rather than rows.
pub fn scaling_report(results: &[BenchResult]) -> ScalingReport {
    let mut groups: BTreeMap<(&str, &str), Vec<&BenchResult>> = BTreeMap::new();
    for r in results {
        groups.entry((&r.model, &r.label)).or_default().push(r);
    }
    let mut report = ScalingReport::default();
    for ((model, label), mut rs) in groups {
        rs.sort_by_key(|r| r.seq_len);
        if rs.len() < 2 {
            report
                .warnings
                .push(format!("{model}/{label}: only one sequence length, no ratios"));
            continue;
        }
        for w in rs.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b.seq_len != 2 * a.seq_len {
                report.warnings.push(format!(
                    "{model}/{label}: {} → {} is not a doubling, skipped",
                    a.seq_len, b.seq_len
                ));
                continue;
            }
            let pair_ratio = b.attended_pairs as f64 / a.attended_pairs as f64;
            report.rows.push(ScalingRow {
                model: model.into(),
                label: label.into(),
                from_len: a.seq_len,
                to_len: b.seq_len,
                time_ratio: b.mean_s / a.mean_s,
                mem_ratio: b.peak_bytes as f64 / a.peak_bytes as f64,
                pair_ratio,
                growth: Growth::classify(pair_ratio),
            });
        }
    }
    report
}

/// Bootstrap confidence that `mean(longer) ≥ mean(shorter)`: the share of
/// `reps` paired resamples in which the inequality holds.
pub fn bootstrap_nondecreasing(shorter: &[f64], longer: &[f64], reps: usize, seed: u64) -> Result<f64> {
    if shorter.is_empty() || longer.is_empty() || reps == 0 {
        bail!(Input, "bootstrap needs samples on both sides and at least one rep");
    }
    let mut r = rng::stream(seed, streams::BENCH);
    let resampled_mean = |xs: &[f64], r: &mut rng::Rng| {
        (0..xs.len()).map(|_| xs[r.random_range(0..xs.len())]).sum::<f64>() / xs.len() as f64
    };
    let mut wins = 0usize;
    for _ in 0..reps {
        let a = resampled_mean(shorter, &mut r);
        let b = resampled_mean(longer, &mut r);
        wins += usize::from(b >= a);
    }
    Ok(wins as f64 / reps as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::AttentionSpec;
    use crate::encoder::ModelConfig;
    use alloc::vec;

    fn fake(model: &str, n: usize, pairs: usize) -> BenchResult {
        BenchResult {
            model: model.into(),
            label: "x".into(),
            seq_len: n,
            batch: 1,
            mean_s: n as f64,
            std_s: 0.0,
            peak_bytes: n * 10,
            attended_pairs: pairs,
            params: 1,
            samples: vec![n as f64; 3],
        }
    }

    fn counting_clock() -> impl FnMut() -> f64 {
        let mut t = 0.0;
        move || {
            t += 0.5;
            t
        }
    }

    #[test]
    fn timing_shape() {
        let ckpt = ModelCheckpoint::init(ModelConfig::tiny(30, 64), 1).unwrap();
        let cfg = BenchConfig {
            seq_lens: vec![16, 32],
            batch_size: 2,
            warmup_reps: 1,
            timed_reps: 5,
            seed: 3,
        };
        let rs = time_inference_with(&ckpt, &cfg, "m", "full", &mut counting_clock()).unwrap();
        assert_eq!(rs.len(), 2);
        for r in &rs {
            assert_eq!(r.samples.len(), 5);
            assert!(r.mean_s > 0.0 && r.std_s.is_finite());
            assert!(r.peak_bytes > 0);
            assert_eq!(r.attended_pairs, r.seq_len * r.seq_len);
            assert_eq!(r.params, count_all_params(&ckpt.config));
        }
    }

    #[test]
    fn over_length_names_the_entry() {
        let ckpt = ModelCheckpoint::init(ModelConfig::tiny(30, 64), 1).unwrap();
        let cfg = BenchConfig {
            seq_lens: vec![32, 128],
            ..BenchConfig::default()
        };
        let err = time_inference_with(&ckpt, &cfg, "m", "full", &mut counting_clock()).unwrap_err();
        assert_eq!(err, Error::Length { len: 128, max: 64 });
    }

    #[test]
    fn config_validation() {
        assert!(BenchConfig::default().validate().is_ok());
        let bad = |c: BenchConfig| c.validate().is_err();
        assert!(bad(BenchConfig { timed_reps: 2, ..Default::default() }));
        assert!(bad(BenchConfig { seq_lens: vec![256, 128], ..Default::default() }));
        assert!(bad(BenchConfig { seq_lens: vec![], ..Default::default() }));
    }

    #[test]
    fn pair_ratios_classify_patterns() {
        let window = AttentionSpec::SlidingWindow {
            window: 8,
            dilation: 1,
            global: vec![],
        };
        let mut rs = Vec::new();
        for n in [128usize, 256, 512] {
            rs.push(fake("full", n, attended_pairs(&AttentionSpec::Full, n).unwrap()));
            rs.push(fake("window", n, attended_pairs(&window, n).unwrap()));
        }
        let rep = scaling_report(&rs);
        assert!(rep.warnings.is_empty());
        assert_eq!(rep.rows.len(), 4);
        for row in &rep.rows {
            if row.model == "full" {
                assert_eq!(row.pair_ratio, 4.0);
                assert_eq!(row.growth, Growth::NearQuadratic);
            } else {
                // (2w+1)n − w(w+1) at n and 2n.
                let at = |n: f64| 17.0 * n - 72.0;
                assert_eq!(row.pair_ratio, at(row.to_len as f64) / at(row.from_len as f64));
                assert!(row.pair_ratio < 2.2);
                assert_eq!(row.growth, Growth::NearLinear);
            }
        }
    }

    #[test]
    fn gaps_and_single_lengths_warn() {
        let rep = scaling_report(&[fake("a", 128, 1)]);
        assert!(rep.rows.is_empty());
        assert_eq!(rep.warnings.len(), 1);
        let rep = scaling_report(&[fake("a", 128, 1), fake("a", 512, 4)]);
        assert!(rep.rows.is_empty());
        assert_eq!(rep.warnings.len(), 1);
    }

    #[test]
    fn bootstrap_confidence() {
        let fast = [1.0, 1.1, 0.9, 1.0, 1.05];
        let slow = [2.0, 2.1, 1.9, 2.0, 2.05];
        assert_eq!(bootstrap_nondecreasing(&fast, &slow, 500, 0).unwrap(), 1.0);
        assert_eq!(bootstrap_nondecreasing(&slow, &fast, 500, 0).unwrap(), 0.0);
        assert!(bootstrap_nondecreasing(&[], &slow, 10, 0).is_err());
    }
}
